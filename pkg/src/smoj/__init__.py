"""smoj: a Gaussian-splat avatar runtime.

Assets are a rest-pose Gaussian set plus 16 FACS expression components;
animation is linear interpolation over the components, rendering is
deterministic tile-based splatting with depth/normal outputs, and fitting
recovers Gaussian sets from multi-view targets with analytic gradients.
"""

from .animation import (
    BlendTimeline,
    blend,
    blend_timeline,
    emotion_preset,
    load_timeline,
    save_timeline,
)
from .assets import (
    FACS_CHANNELS,
    AvatarAsset,
    BlendWeights,
    Camera,
    Gaussian,
    GaussianSet,
    InvalidAssetError,
    SmojParseError,
    Violation,
    component_deltas,
    load_asset,
    load_cameras,
    save_asset,
    save_cameras,
    validate_asset,
)
from .fitting import FitConfig, FitDiverged, FitResult, fit
from .losses import (
    LossWeights,
    l_dist,
    l_gda,
    l_normal,
    l_render,
    psnr,
    total_3dgen_loss,
)
from .rendering import (
    RayDistortionInput,
    RenderConfig,
    RenderOutput,
    backprop_render,
    normals_from_depth,
    render,
    render_reference,
    render_turntable,
    render_with_rays,
)

__version__ = "0.1.0"
