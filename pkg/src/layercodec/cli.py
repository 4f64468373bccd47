"""Command-line entry point (``layercodec``).

Exit codes: 0 success, 2 usage error, 3 format or corruption error,
4 invariant violation. Every run writes a JSON log holding the full
:class:`RunConfig` and the package version.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import container as ct
from .adapters import AdapterWeights, TaskHead, adapt_image, param_count_report
from .config import RunConfig, build_config, load_config_file
from .errors import (CodecError, DecodeOrderError, DecodingError, EncodingError, FormatError,
                     InvalidMaskSet, SerializationError)
from .image import decode_image_full, encode_image
from .metrics import bpp, psnr
from .partition import CONV_GUMBEL, ConvPredictorWeights, PredictorConfig
from .sweep import dump_masks, rd_sweep, rows_to_csv
from .tensors import read_image, write_image
from .tuning import AdapterCase, tune_stage1, tune_stage1_video, tune_stage2
from .video import VideoConfig, decode_video_branches, encode_video

EXIT_OK, EXIT_USAGE, EXIT_FORMAT, EXIT_INVARIANT = 0, 2, 3, 4
FRAME_SUFFIXES = (".pgm", ".ppm", ".pnm")


def _frames_in(path) -> list:
    p = Path(path)
    if p.is_dir():
        files = sorted(f for f in p.iterdir() if f.suffix.lower() in FRAME_SUFFIXES)
        if not files:
            raise FileNotFoundError(f"no PGM/PPM frames in {p}")
        return [read_image(f) for f in files]
    return [read_image(p)]


def _predictor(cfg: RunConfig, weights_path=None) -> PredictorConfig:
    w = ConvPredictorWeights.load(weights_path) if weights_path else None
    return PredictorConfig(cfg.predictor, tuple(cfg.keep), w)


def _video_config(cfg: RunConfig) -> VideoConfig:
    return VideoConfig(cfg.n_layers, cfg.q, _predictor(cfg, cfg.weights),
                       _predictor(cfg, cfg.motion_weights), _predictor(cfg, cfg.residual_weights),
                       cfg.temporal_ablation, cfg.gop)


def _video_weights(cfg: RunConfig) -> dict:
    out = {}
    for key, path in (("intra", cfg.weights), ("motion", cfg.motion_weights),
                      ("residual", cfg.residual_weights)):
        if path:
            out[key] = ConvPredictorWeights.load(path)
    return out


def _need(cfg: RunConfig, inputs: int = 1, output: bool = True):
    if len(cfg.inputs) < inputs:
        raise _Usage(f"{cfg.command} needs {inputs} input path(s)")
    if output and not cfg.output:
        raise _Usage(f"{cfg.command} needs --output")


class _Usage(Exception):
    pass


# --- commands ---------------------------------------------------------------

def cmd_encode(cfg: RunConfig) -> dict:
    _need(cfg)
    img = read_image(cfg.inputs[0])
    enc = encode_image(img, cfg.n_layers, _predictor(cfg, cfg.weights), q=cfg.q)
    Path(cfg.output).write_bytes(enc.data)
    px = img.height * img.width
    return {"bytes": len(enc.data),
            "prefix_bpp": [bpp(enc.prefix_bytes(i), px) for i in range(cfg.n_layers + 1)]}


def cmd_decode(cfg: RunConfig) -> dict:
    _need(cfg)
    data = Path(cfg.inputs[0]).read_bytes()
    w = ConvPredictorWeights.load(cfg.weights) if cfg.weights else None
    dec = decode_image_full(data, cfg.layers_upto, w)
    img = dec.image
    if cfg.adapter:
        img = adapt_image(img, AdapterWeights.load(cfg.adapter))
    write_image(cfg.output, img)
    return {"layers": dec.header.n_layers if cfg.layers_upto is None else cfg.layers_upto}


def cmd_encode_video(cfg: RunConfig) -> dict:
    _need(cfg)
    frames = _frames_in(cfg.inputs[0])
    enc = encode_video(frames, _video_config(cfg))
    Path(cfg.output).write_bytes(enc.data)
    return {"bytes": len(enc.data), "frames": len(frames),
            "section_bytes": [s.section_bytes for s in enc.stats]}


def cmd_decode_video(cfg: RunConfig) -> dict:
    _need(cfg)
    data = Path(cfg.inputs[0]).read_bytes()
    frames = decode_video_branches(data, cfg.branch, _video_weights(cfg))[-1]
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    ext = ".ppm" if frames[0].channels == 3 else ".pgm"
    for t, f in enumerate(frames):
        write_image(out / f"frame_{t:06d}{ext}", f)
    return {"frames": len(frames)}


def inspect_bytes(data: bytes) -> dict:
    h = ct.parse_header(data)
    info = {"mode": h.mode, "version": h.version, "dims": list(h.dims), "n_layers": h.n_layers,
            "predictor": h.predictor, "params_len": len(h.params), "side_len": h.side_len,
            "section_lengths": list(h.lengths), "header_bytes": h.size,
            "total_bytes": h.total_size, "file_bytes": len(data),
            "prefix_bytes": [h.prefix_size(i) for i in range(len(h.lengths) + 1)]}
    if h.mode == ct.MODE_VIDEO_SEQUENCE:
        secs = ct.read_container(data)[2]
        info["frame_modes"] = [ct.parse_header(s).mode for s in secs]
    return info


def cmd_inspect(cfg: RunConfig) -> dict:
    _need(cfg, output=False)
    info = inspect_bytes(Path(cfg.inputs[0]).read_bytes())
    print(json.dumps(info, indent=2))
    return info


def cmd_dump_masks(cfg: RunConfig) -> dict:
    _need(cfg)
    w = ConvPredictorWeights.load(cfg.weights) if cfg.weights else None
    paths = dump_masks(Path(cfg.inputs[0]).read_bytes(), cfg.output, w)
    return {"files": [str(p) for p in paths]}


def _image_corpus(cfg: RunConfig) -> list:
    out = []
    for p in cfg.inputs:
        out.extend(_frames_in(p))
    if not out:
        raise _Usage(f"{cfg.command} needs at least one input image")
    return out


def cmd_rd_sweep(cfg: RunConfig) -> dict:
    corpus = _image_corpus(cfg)
    rows = rd_sweep(corpus, cfg.qs, cfg.lams, cfg.n_layers, cfg.task,
                    _predictor(cfg, cfg.weights), tune=True, jobs=cfg.jobs)
    text = rows_to_csv(rows)
    if cfg.output:
        Path(cfg.output).write_text(text)
    else:
        sys.stdout.write(text)
    return {"rows": len(rows)}


def cmd_tune_stage1(cfg: RunConfig) -> dict:
    head = TaskHead(cfg.task)
    if cfg.video:
        seqs = [_frames_in(p) for p in cfg.inputs]
        vcfg, loss, init, _ = tune_stage1_video(seqs, cfg.lam, _video_config(cfg), head, jobs=cfg.jobs)
        result = {"motion_keep": list(vcfg.motion.keep), "residual_keep": list(vcfg.residual.keep),
                  "loss": loss, "initial_loss": init}
        lines = [f"motion_keep = {','.join(map(str, vcfg.motion.keep))}",
                 f"residual_keep = {','.join(map(str, vcfg.residual.keep))}"]
    else:
        r = tune_stage1(_image_corpus(cfg), cfg.n_layers, cfg.lam, _predictor(cfg), head,
                        q=cfg.q, jobs=cfg.jobs)
        result = {"keep": list(r.config.keep), "loss": r.loss, "initial_loss": r.initial_loss}
        lines = [f"keep = {','.join(map(str, r.config.keep))}"]
    if cfg.output:
        Path(cfg.output).write_text(
            "# tuned keep fractions\n" + "\n".join(lines) + f"\nq = {cfg.q}\nlam = {cfg.lam}\n")
    print(json.dumps(result))
    return result


def cmd_tune_stage2(cfg: RunConfig) -> dict:
    _need(cfg)
    head = TaskHead(cfg.task)
    corpus = _image_corpus(cfg)
    pred = _predictor(cfg, cfg.weights)
    i = cfg.layers_upto if cfg.layers_upto is not None else 1
    cases = []
    for img in corpus:
        enc = encode_image(img, cfg.n_layers, pred, q=cfg.q)
        xhat = decode_image_full(enc.data, i, pred.weights).image
        cases.append(AdapterCase(xhat, head(img)))
    start = (AdapterWeights.load(cfg.adapter) if cfg.adapter
             else AdapterWeights.zeros(corpus[0].channels))
    r = tune_stage2(cases, start, head, budget=cfg.budget)
    r.weights.save(cfg.output)
    result = {"loss": r.loss, "initial_loss": r.initial_loss, "evaluations": r.evaluations}
    print(json.dumps(result))
    return result


def cmd_psnr(cfg: RunConfig) -> dict:
    _need(cfg, inputs=2, output=False)
    val = psnr(read_image(cfg.inputs[0]), read_image(cfg.inputs[1]))
    print(f"{val:.4f}")
    return {"psnr": val}


def cmd_report_params(cfg: RunConfig) -> dict:
    channels = 3
    if cfg.inputs:
        channels = read_image(cfg.inputs[0]).channels
    adapter = (AdapterWeights.load(cfg.adapter) if cfg.adapter
               else {"channels": channels, "video": cfg.video})
    rep = param_count_report(adapter, TaskHead(cfg.task, channels))
    print(rep["text"])
    return {k: v for k, v in rep.items() if k != "text"}


COMMANDS = {
    "encode": cmd_encode, "decode": cmd_decode, "encode-video": cmd_encode_video,
    "decode-video": cmd_decode_video, "inspect": cmd_inspect, "dump-masks": cmd_dump_masks,
    "rd-sweep": cmd_rd_sweep, "tune-stage1": cmd_tune_stage1, "tune-stage2": cmd_tune_stage2,
    "psnr": cmd_psnr, "report-params": cmd_report_params,
}


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="layercodec", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("inputs", nargs="*")
        s.add_argument("-o", "--output")
        s.add_argument("--config", help="key = value config file; flags override it")
        s.add_argument("-n", "--n-layers", dest="n_layers", type=int)
        s.add_argument("--q", type=float)
        s.add_argument("--lam", type=float)
        s.add_argument("--predictor", choices=["sigma-topk", CONV_GUMBEL])
        s.add_argument("--keep", type=_floats)
        s.add_argument("--weights")
        s.add_argument("--motion-weights", dest="motion_weights")
        s.add_argument("--residual-weights", dest="residual_weights")
        s.add_argument("--adapter")
        s.add_argument("--layers", dest="layers_upto", type=int)
        s.add_argument("--branch", type=int)
        s.add_argument("--temporal-ablation", dest="temporal_ablation", action="store_const",
                       const=True)
        s.add_argument("--gop", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--task", choices=["A", "B"])
        s.add_argument("--qs", type=_floats)
        s.add_argument("--lams", type=_floats)
        s.add_argument("--budget", type=int)
        s.add_argument("--jobs", type=int)
        s.add_argument("--video", action="store_const", const=True)
        s.add_argument("--log", help="run log path (default: <output>.run.json or ./layercodec-run.json)")
    return p


def _log_path(cfg: RunConfig) -> Path:
    if cfg.log:
        return Path(cfg.log)
    if cfg.output and not Path(cfg.output).is_dir():
        return Path(str(cfg.output) + ".run.json")
    if cfg.output:
        return Path(cfg.output) / "run.json"
    return Path("layercodec-run.json")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    flags = vars(args)
    cfg_file = flags.pop("config")
    try:
        file_values = load_config_file(cfg_file) if cfg_file else {}
        flags["inputs"] = flags["inputs"] or None
        cfg = build_config(file_values, flags)
        np.random.seed(cfg.seed)
        result = COMMANDS[cfg.command](cfg)
        status = EXIT_OK
    except (_Usage, FileNotFoundError, IsADirectoryError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, DecodingError, SerializationError) as e:
        print(f"format error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except (InvalidMaskSet, EncodingError, DecodeOrderError) as e:
        print(f"invariant violation: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except CodecError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    log = {"version": __version__, "argv": list(sys.argv[1:] if argv is None else argv),
           "config": cfg.to_dict(), "result": result, "status": status}
    _log_path(cfg).write_text(json.dumps(log, indent=2, default=str))
    return status


if __name__ == "__main__":
    sys.exit(main())
