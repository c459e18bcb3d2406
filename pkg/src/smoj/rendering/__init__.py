from .api import RayDistortionInput, render, render_reference, render_with_rays
from .backward import ParamGrads, backprop_render
from .config import RenderConfig, RenderOutput
from .io import load_buffer, save_buffer, save_png, save_render
from .normals import normals_from_depth
from .turntable import fibonacci_directions, render_turntable, turntable_cameras

__all__ = [
    "ParamGrads",
    "RayDistortionInput",
    "RenderConfig",
    "RenderOutput",
    "backprop_render",
    "fibonacci_directions",
    "load_buffer",
    "normals_from_depth",
    "render",
    "render_reference",
    "render_turntable",
    "render_with_rays",
    "save_buffer",
    "save_png",
    "save_render",
    "turntable_cameras",
]
