/** Emotion presets; channel mixes match the runtime's preset table. */

export const EMOTION_PRESETS: Record<string, Record<string, number>> = {
  neutrality: {},
  happiness: { mouthSmileLeft: 0.85, mouthSmileRight: 0.85 },
  frustration: {
    browDownLeft: 0.8, browDownRight: 0.8,
    mouthFrownLeft: 0.45, mouthFrownRight: 0.45,
  },
  playfulness: {
    mouthSmileLeft: 0.7, mouthSmileRight: 0.35,
    eyeBlinkLeft: 1.0, jawLeft: 0.3,
  },
  anger: {
    browDownLeft: 1.0, browDownRight: 1.0,
    mouthFrownLeft: 0.6, mouthFrownRight: 0.6, lipsPucker: 0.4,
  },
  surprise: { browUpLeft: 0.95, browUpRight: 0.95, jawOpen: 0.65 },
};

export function presetWeights(name: string, channels: string[]): Float64Array {
  const mix = EMOTION_PRESETS[name];
  if (!mix) {
    throw new Error(`unknown emotion preset: ${name}`);
  }
  const w = new Float64Array(channels.length);
  for (const [channel, value] of Object.entries(mix)) {
    const i = channels.indexOf(channel);
    if (i >= 0) w[i] = value;
  }
  return w;
}
