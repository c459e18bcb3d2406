"""Generate the golden fixtures the viewer tests compare against.

Writes test/fixtures/golden.smoj plus golden.json holding the asset manifest
and 20 weight vectors with the runtime's blended positions (and every field
for splat 0) as the parity oracle.
"""

import json
from pathlib import Path

import numpy as np

from smoj.animation import blend
from smoj.assets import save_asset
from smoj.synthetic import random_asset

OUT = Path(__file__).resolve().parent.parent / "test" / "fixtures"


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(2024)
    asset = random_asset(rng, 40)
    save_asset(asset, OUT / "golden.smoj")

    cases = []
    for t in range(20):
        if t == 0:
            w = np.zeros(16)
        elif t <= 16:
            w = np.zeros(16)
            w[t - 1] = 1.0
        else:
            w = rng.uniform(0, 1, 16)
        posed = blend(asset, w)
        cases.append({
            "weights": [float(x) for x in w],
            "positions": [float(x) for x in posed.positions.reshape(-1)],
            "splat0": {
                "position": [float(x) for x in posed.positions[0]],
                "scale": [float(x) for x in posed.scales[0]],
                "orientation": [float(x) for x in posed.orientations[0]],
                "color": [float(x) for x in posed.colors[0]],
                "opacity": float(posed.opacities[0]),
            },
        })

    manifest = {
        "m": asset.m,
        "k": asset.k,
        "channels": list(asset.channel_names),
        "rest_probe": {
            "position0": [float(x) for x in asset.rest.positions[0]],
            "opacity_last": float(asset.rest.opacities[-1]),
        },
        "cases": cases,
    }
    with open(OUT / "golden.json", "w") as f:
        json.dump(manifest, f)
    print(f"wrote fixtures to {OUT}")


if __name__ == "__main__":
    main()
