"""Command-line interface: batch rendering, volume tools, and the stream service."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .camera import Camera, Orthographic, Perspective, ViewRig, turntable_cameras
from .frame import Frame, write_png
from .multiview import (QuiltLayout, StereoParams, anaglyph,
                        compensate_aspect, hstack_frames, interleave,
                        load_calibration, pack_side_by_side, quilt_suffix,
                        stereo_cameras)
from .render import RenderSettings, render, render_views
from .scheduler import default_camera, one_shot_quilt
from .synthetic import SHAPES, SyntheticSpec, make_synthetic
from .volume import TransferFunction, Volume, VolumeError, load_volume, save_volume

OUTPUT_MODES = ("frame", "stereo-sbs", "anaglyph", "quilt", "native")

# distinguishable defaults for multi-channel volumes without explicit --tf
_PALETTE = [(0.0, 1.0, 0.0), (1.0, 0.0, 1.0), (0.0, 1.0, 1.0),
            (1.0, 1.0, 0.0), (1.0, 0.4, 0.0), (0.4, 0.4, 1.0)]


class CliError(Exception):
    """User-facing CLI failure; message printed to stderr, exit code 1."""


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise CliError(f"expected WxH, got {text!r}")
    if w < 1 or h < 1:
        raise CliError(f"size must be positive, got {text!r}")
    return w, h


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        c, r = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise CliError(f"expected CxR, got {text!r}")
    if c < 1 or r < 1:
        raise CliError(f"grid must be positive, got {text!r}")
    return c, r


def _parse_floats(text: str, n: int, what: str) -> tuple[float, ...]:
    parts = text.split(",")
    if len(parts) != n:
        raise CliError(f"{what} needs {n} comma-separated values, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise CliError(f"bad {what}: {text!r}")


def _parse_tf(text: str) -> TransferFunction:
    parts = text.split(":")
    if len(parts) != 7:
        raise CliError(
            f"--tf needs low:high:gamma:r:g:b:alpha, got {text!r}"
        )
    try:
        low, high, gamma, r, g, b, alpha = (float(p) for p in parts)
    except ValueError:
        raise CliError(f"bad --tf values: {text!r}")
    return TransferFunction(low=low, high=high, gamma=gamma, color=(r, g, b),
                            alpha_scale=alpha)


def apply_channel_transfers(volume: Volume, tfs: list[TransferFunction] | None) -> Volume:
    """Install explicit transfer functions, or palette colors for bare channels."""
    if tfs:
        if len(tfs) > len(volume.channels):
            raise CliError(f"{len(tfs)} --tf options for {len(volume.channels)} channels")
        for i, tf in enumerate(tfs):
            volume = volume.with_transfer(i, tf)
        return volume
    if len(volume.channels) > 1:
        for i in range(len(volume.channels)):
            color = _PALETTE[i % len(_PALETTE)]
            volume = volume.with_transfer(i, replace(volume.channels[i].transfer,
                                                     color=color))
    return volume


def build_camera(args, volume: Volume, aspect: float) -> Camera:
    base = default_camera(volume, aspect)
    center = (_parse_floats(args.center, 3, "--center") if args.center
              else volume.center)
    if args.projection == "perspective":
        projection = Perspective(vfov_deg=args.vfov)
    else:
        projection = Orthographic(view_height=args.view_height or volume.diagonal)
    return Camera(
        rotation_center=center,
        distance=args.distance if args.distance is not None else base.distance,
        projection=projection,
        azimuth_deg=args.azimuth,
        elevation_deg=args.elevation,
        aspect=aspect,
    )


def build_settings(args) -> RenderSettings:
    background = (_parse_floats(args.background, 4, "--background")
                  if args.background else (0.0, 0.0, 0.0, 1.0))
    return RenderSettings(
        mode=args.render_mode,
        layering=args.layering,
        sample_step=args.sample_step,
        background=background,
    )


def _output_path(args, volume_path: Path, suffix: str = "") -> Path:
    if args.out:
        out = Path(args.out)
        if suffix and suffix not in out.name:
            out = out.with_name(out.stem + suffix + out.suffix)
        return out
    name = volume_path.stem + (suffix or f"_{args.mode}") + ".png"
    return Path.cwd() / name


def cmd_render(args) -> int:
    volume = load_volume(args.volume)
    volume = apply_channel_transfers(volume, [_parse_tf(t) for t in args.tf or []])
    settings = build_settings(args)
    width, height = _parse_size(args.size)
    written: list[Path] = []

    if args.mode == "frame":
        camera = build_camera(args, volume, width / height)
        frame = render(volume, camera, settings, (width, height), workers=args.workers)
        written.append(write_png(frame, _output_path(args, Path(args.volume))))

    elif args.mode in ("stereo-sbs", "anaglyph"):
        stereo = StereoParams(mode=args.stereo_mode, eye_distance=args.eye_distance,
                              eye_angle=args.eye_angle)
        if args.mode == "stereo-sbs" and args.compensate_aspect:
            if width % 2 != 0:
                raise CliError(f"side-by-side width must be even, got {width}")
            base = build_camera(args, volume, (width // 2) / height)
            base = compensate_aspect(base, (width, height))
            left, right = stereo_cameras(base, stereo)
            eyes = render_views(volume, [left, right], settings,
                                (width // 2, height), workers=args.workers)
            out = hstack_frames(eyes[0], eyes[1])
        else:
            base = build_camera(args, volume, width / height)
            left, right = stereo_cameras(base, stereo)
            eyes = render_views(volume, [left, right], settings, (width, height),
                                workers=args.workers)
            if args.mode == "anaglyph":
                out = anaglyph(eyes[0], eyes[1])
            else:
                if width % 2 != 0:
                    raise CliError(f"side-by-side width must be even, got {width}")
                out = pack_side_by_side(eyes[0], eyes[1])
        written.append(write_png(out, _output_path(args, Path(args.volume))))

    elif args.mode == "quilt":
        columns, rows = _parse_grid(args.layout)
        if args.views > columns * rows:
            raise CliError(f"--views {args.views} does not fit layout {args.layout}")
        tile_w, tile_h = width // columns, height // rows
        if tile_w < 1 or tile_h < 1:
            raise CliError(f"layout {args.layout} too fine for size {args.size}")
        layout = QuiltLayout(columns=columns, rows=rows, tile_width=tile_w,
                             tile_height=tile_h, n_views=args.views)
        rig = ViewRig(n_views=args.views, step_deg=args.step)
        camera = build_camera(args, volume, tile_w / tile_h)
        quilt, _ = one_shot_quilt(volume, camera, rig, settings, layout,
                                  workers=args.workers)
        canvas = _pad_canvas(quilt, width, height)
        written.append(write_png(canvas, _output_path(args, Path(args.volume),
                                                      quilt_suffix(layout))))

    elif args.mode == "native":
        if not args.calibration:
            raise CliError("--mode native requires --calibration")
        calib = load_calibration(args.calibration)
        rig = ViewRig(n_views=calib.n_views, step_deg=args.step)
        camera = build_camera(args, volume, width / height)
        views = render_views(volume, turntable_cameras(camera, rig), settings,
                             (width, height), workers=args.workers)
        native = interleave(views, calib)
        written.append(write_png(native, _output_path(args, Path(args.volume))))

    for path in written:
        print(path)
    return 0


def _pad_canvas(quilt: Frame, width: int, height: int) -> Frame:
    """Anchor the quilt at the bottom-left of a WxH black canvas (exact size output)."""
    if quilt.size == (width, height):
        return quilt
    canvas = Frame.filled(width, height, (0, 0, 0, 255))
    canvas.pixels[height - quilt.height :, : quilt.width] = quilt.pixels
    return canvas


def cmd_make_volume(args) -> int:
    dims = tuple(int(v) for v in args.dims.lower().split("x"))
    if len(dims) != 3:
        raise CliError(f"--dims needs XxYxZ, got {args.dims!r}")
    spacing = _parse_floats(args.spacing, 3, "--spacing") if args.spacing else (1.0, 1.0, 1.0)
    spec = SyntheticSpec(
        shape=args.shape, dims=dims, spacing=spacing,
        radius=args.radius, falloff=args.falloff,
        fibers=args.fibers, turns=args.turns, tube_radius=args.tube_radius,
        depth=args.depth, seed=args.seed,
    )
    volume = make_synthetic(spec)
    path = save_volume(volume, args.out, dtype=args.dtype)
    print(path)
    return 0


def cmd_list_volumes(args) -> int:
    from .service import list_volumes
    entries = list_volumes(args.directory)
    for info in entries:
        if info.ok:
            nx, ny, nz = info.dims
            print(f"{info.name}: {nx}x{ny}x{nz} voxels, "
                  f"{len(info.channel_names)} channel(s), {info.timepoints} timepoint(s)")
        else:
            print(f"{info.name}: WARNING {info.error}")
    return 0


def cmd_serve(args) -> int:
    from .service import ServiceConfig, run_service
    config = ServiceConfig(
        host=args.host,
        port=args.port,
        volume_dir=Path(args.volumes),
        rig=ViewRig(n_views=args.views, step_deg=args.step),
        tile_width=args.tile_size,
        tile_height=args.tile_size,
        max_sessions=args.max_sessions,
        workers=args.workers,
        static_dir=Path(args.static) if args.static else None,
    )
    run_service(config)
    return 0


def _add_render_parser(sub) -> None:
    p = sub.add_parser("render", help="render a volume to PNG output(s)")
    p.add_argument("--volume", required=True, help="volume sidecar (.meta) path")
    p.add_argument("--mode", choices=OUTPUT_MODES, default="frame")
    p.add_argument("--out", help="output PNG path (quilt mode appends the layout suffix)")
    p.add_argument("--size", default="512x512", help="output size WxH (quilt: whole canvas)")
    p.add_argument("--views", type=int, default=45, help="view count for quilt/native")
    p.add_argument("--step", type=float, default=1.0, help="degrees between views")
    p.add_argument("--layout", default="8x6", help="quilt grid CxR")
    p.add_argument("--azimuth", type=float, default=0.0)
    p.add_argument("--elevation", type=float, default=0.0)
    p.add_argument("--distance", type=float, default=None, help="micrometers from center")
    p.add_argument("--center", default=None, help="rotation center x,y,z (micrometers)")
    p.add_argument("--projection", choices=("orthographic", "perspective"),
                   default="orthographic")
    p.add_argument("--view-height", type=float, default=None,
                   help="orthographic window height (micrometers)")
    p.add_argument("--vfov", type=float, default=40.0, help="perspective vertical fov")
    p.add_argument("--render-mode", choices=("mip", "emission_absorption"), default="mip")
    p.add_argument("--layering", action="store_true", help="render channels separately and layer")
    p.add_argument("--sample-step", type=float, default=None, help="micrometers along ray")
    p.add_argument("--background", default=None, help="background r,g,b,a in [0,1]")
    p.add_argument("--tf", action="append",
                   help="per-channel transfer low:high:gamma:r:g:b:alpha (repeatable)")
    p.add_argument("--stereo-mode", choices=("shift", "turntable"), default="turntable")
    p.add_argument("--eye-distance", type=float, default=0.0, help="micrometers (shift mode)")
    p.add_argument("--eye-angle", type=float, default=4.0, help="degrees (turntable mode)")
    p.add_argument("--compensate-aspect", action="store_true",
                   help="render half-width eyes with full-frame aspect (3D TV)")
    p.add_argument("--calibration", help="lenticular calibration file (native mode)")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_render)


def _add_make_volume_parser(sub) -> None:
    p = sub.add_parser("make-volume", help="write a synthetic test volume")
    p.add_argument("--shape", choices=SHAPES, required=True)
    p.add_argument("--dims", default="64x64x64")
    p.add_argument("--spacing", default=None, help="voxel spacing sx,sy,sz (micrometers)")
    p.add_argument("--out", required=True, help="sidecar (.meta) output path")
    p.add_argument("--dtype", choices=("u8", "u16le"), default="u16le")
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--falloff", type=float, default=0.0)
    p.add_argument("--fibers", type=int, default=3)
    p.add_argument("--turns", type=float, default=2.0)
    p.add_argument("--tube-radius", type=float, default=None)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_make_volume)


def _add_list_parser(sub) -> None:
    p = sub.add_parser("list-volumes", help="enumerate volume sidecars in a directory")
    p.add_argument("directory")
    p.set_defaults(func=cmd_list_volumes)


def _add_serve_parser(sub) -> None:
    p = sub.add_parser("serve", help="run the interactive stream service")
    p.add_argument("--volumes", required=True, help="volume search directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8799)
    p.add_argument("--views", type=int, default=45)
    p.add_argument("--step", type=float, default=1.0)
    p.add_argument("--tile-size", type=int, default=256, help="per-view render size")
    p.add_argument("--max-sessions", type=int, default=4)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--static", default=None, help="viewer asset directory to serve at /")
    p.set_defaults(func=cmd_serve)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="quiltcast",
                                     description="volume renderer for 3D displays")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_render_parser(sub)
    _add_make_volume_parser(sub)
    _add_list_parser(sub)
    _add_serve_parser(sub)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, VolumeError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
