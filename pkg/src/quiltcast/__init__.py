"""quiltcast: multi-view volume raycasting for 3D displays.

Renders multi-channel intensity volumes into display-ready outputs: stereo
side-by-side pairs, anaglyphs, multi-view quilts, and lenticular-interleaved
native frames, with raycast autofocus and progressive per-view streaming.
"""

from .camera import (Camera, Orthographic, Perspective, Projection, ViewRig,
                     camera_from_position, camera_ray, camera_rays,
                     turntable_cameras)
from .frame import (Frame, decode_png, encode_png, frames_equal, read_png,
                    write_png)
from .multiview import (DisplaySpec, LenticularCalibration, QuiltLayout,
                        StereoParams, anaglyph, assemble_quilt,
                        compensate_aspect, extract_tiles, foveal_pixels,
                        hstack_frames, interleave, load_calibration,
                        pack_side_by_side, quilt_suffix, save_calibration,
                        stereo_cameras, view_index_for_subpixel,
                        view_index_map)
from .render import (FocusResult, RenderCancelled, RenderSettings, autofocus,
                     ensure_kernels_ready, render, render_mip_intensity,
                     render_views)
from .scheduler import (RenderSession, ViewUpdate, default_layout,
                        one_shot_quilt, run_progressive, view_order)
from .synthetic import SyntheticSpec, make_synthetic
from .volume import (TransferFunction, Volume, VolumeChannel, VolumeError,
                     apply_transfer, load_volume, sample_trilinear,
                     save_volume, transfer_weight)

__version__ = "0.1.0"

__all__ = [
    "Camera", "Orthographic", "Perspective", "Projection", "ViewRig",
    "camera_from_position", "camera_ray", "camera_rays", "turntable_cameras",
    "Frame", "decode_png", "encode_png", "frames_equal", "read_png", "write_png",
    "DisplaySpec", "LenticularCalibration", "QuiltLayout", "StereoParams",
    "anaglyph", "assemble_quilt", "compensate_aspect", "extract_tiles",
    "foveal_pixels", "hstack_frames", "interleave", "load_calibration",
    "pack_side_by_side", "quilt_suffix", "save_calibration", "stereo_cameras",
    "view_index_for_subpixel", "view_index_map",
    "FocusResult", "RenderCancelled", "RenderSettings", "autofocus",
    "ensure_kernels_ready", "render", "render_mip_intensity", "render_views",
    "RenderSession", "ViewUpdate", "default_layout", "one_shot_quilt",
    "run_progressive", "view_order",
    "SyntheticSpec", "make_synthetic",
    "TransferFunction", "Volume", "VolumeChannel", "VolumeError",
    "apply_transfer", "load_volume", "sample_trilinear", "save_volume",
    "transfer_weight",
    "__version__",
]
