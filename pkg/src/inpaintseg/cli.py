"""Command-line pipeline: synth, train, segment, evaluate.

Exit codes: 0 success, 1 usage/config error, 2 runtime failure (including
a divergence abort during training).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import imagedata, localization, metrics, network, superpixel, synth, training
from .config import COMMAND_KEYS, ConfigError, read_config_file, resolve
from .masking import random_mask, windows

log = logging.getLogger("inpaintseg")


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; the CLI contract wants 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="inpaintseg",
                     description="Unsupervised anomaly segmentation via adversarial inpainting.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    descriptions = {
        "synth": "generate a synthetic dataset with ground-truth masks",
        "train": "train the inpainting network on healthy slices",
        "segment": "heatmap + superpixel segmentation for query slices",
        "evaluate": "Dice / PSNR / SSIM evaluation against a manifest",
    }
    for command, keys in COMMAND_KEYS.items():
        cmd = sub.add_parser(command, help=descriptions[command])
        cmd.add_argument("--config", help="config file path or preset name")
        for key in keys:
            flag = "--" + key.name.replace("_", "-")
            cmd.add_argument(flag, dest=key.name, type=str, default=None, help=key.help)
    return parser


def _require_file(path: str, what: str) -> str:
    if not os.path.isfile(path):
        raise UsageError(f"{what} not found: {path}")
    return path


def _manifest_path(data: str) -> str:
    # accept either the manifest itself or its dataset directory
    if os.path.isdir(data):
        data = os.path.join(data, "manifest.csv")
    return _require_file(data, "dataset manifest")


def cmd_synth(cfg: dict) -> int:
    spec = synth.SynthSpec(
        width=cfg["width"], height=cfg["height"],
        n_normal=cfg["n_normal"], n_anomalous=cfg["n_anom"],
        radius_min=cfg["radius_min"], radius_max=cfg["radius_max"],
        seed=cfg["seed"],
    )
    manifest = synth.write_dataset(spec, cfg["out"])
    log.info("wrote %d normal + %d anomalous slices to %s",
             spec.n_normal, spec.n_anomalous, cfg["out"])
    log.info("manifest: %s", manifest)
    return 0


def _load_dataset_slices(manifest_path: str, label: str):
    base = os.path.dirname(manifest_path)
    entries = [e for e in synth.read_manifest(manifest_path) if e.label == label]
    slices = [imagedata.load_slice(os.path.join(base, e.filename)) for e in entries]
    return entries, slices


def cmd_train(cfg: dict) -> int:
    manifest = _manifest_path(cfg["data"])
    entries, slices = _load_dataset_slices(manifest, "normal")
    if not slices:
        raise UsageError(f"{manifest}: no normal slices to train on")
    h, w = slices[0].shape
    g_spec = network.GeneratorSpec(depth=cfg["depth"], base_channels=cfg["base_channels"],
                                   width=w, height=h)
    d_spec = network.DiscriminatorSpec(depth=cfg["d_depth"],
                                       base_channels=cfg["d_base_channels"],
                                       spectral_norm_iters=cfg["sn_iters"])
    train_cfg = training.TrainConfig(
        gamma=cfg["gamma"], batch_size=cfg["batch_size"], iterations=cfg["iterations"],
        lr_g=cfg["lr_g"], lr_d=cfg["lr_d"],
        lambda_rec=cfg["lambda_rec"], lambda_adv=cfg["lambda_adv"],
        seed=cfg["seed"], beta1=cfg["beta1"], beta2=cfg["beta2"], epsilon=cfg["epsilon"],
    )
    os.makedirs(cfg["out"], exist_ok=True)
    log_path = os.path.join(cfg["out"], "trainlog.csv")
    ckpt_path = os.path.join(cfg["out"], f"model_gamma{cfg['gamma']}.ckpt")
    log.info("training on %d healthy slices (%dx%d), gamma=%d, %d iterations",
             len(slices), w, h, cfg["gamma"], cfg["iterations"])
    try:
        ckpt, train_log = training.train(slices, g_spec, d_spec, train_cfg)
    except training.DivergenceError as exc:
        exc.log.write_csv(log_path)
        log.error("%s (partial log kept at %s)", exc, log_path)
        return 2
    train_log.write_csv(log_path)
    network.save_checkpoint(ckpt, ckpt_path)
    log.info("checkpoint: %s", ckpt_path)
    log.info("train log: %s", log_path)
    return 0


def _hot_rgb(unit: np.ndarray) -> np.ndarray:
    r = np.clip(3.0 * unit, 0, 1)
    g = np.clip(3.0 * unit - 1.0, 0, 1)
    b = np.clip(3.0 * unit - 2.0, 0, 1)
    return np.stack([r, g, b], axis=-1) * 255.0


def _gray_rgb(slice_: np.ndarray) -> np.ndarray:
    return np.repeat(slice_[:, :, None], 3, axis=2)


def _boundary_overlay(slice_: np.ndarray, labels: np.ndarray) -> np.ndarray:
    rgb = _gray_rgb(slice_)
    edges = np.zeros(labels.shape, dtype=bool)
    edges[:, :-1] |= labels[:, :-1] != labels[:, 1:]
    edges[:-1, :] |= labels[:-1, :] != labels[1:, :]
    rgb[edges] = (255.0, 255.0, 0.0)
    return rgb


def _panel_strip(panels, gap: int = 2) -> np.ndarray:
    h = panels[0].shape[0]
    sep = np.full((h, gap, 3), 255.0)
    parts = []
    for i, p in enumerate(panels):
        if i:
            parts.append(sep)
        parts.append(p)
    return np.concatenate(parts, axis=1)


def _segment_one(slice_path: str, truth_path, ckpt, ckpt_digest: str, cfg: dict):
    stem = os.path.splitext(os.path.basename(slice_path))[0]
    query = imagedata.load_slice(slice_path)
    oh, ow = query.shape

    if ckpt.kind == "generator":
        gw, gh = ckpt.g_spec.width, ckpt.g_spec.height
        if ow > gw or oh > gh:
            raise ValueError(f"{slice_path}: slice {ow}x{oh} larger than model input {gw}x{gh}")
        padded = imagedata.pad_to(query, gw, gh) if (ow, oh) != (gw, gh) else query
    else:
        padded = query
    heatmap = localization.build_heatmap_from_checkpoint(padded, ckpt, cfg["k"],
                                                         batch_size=cfg["batch"])
    n_windows = len(windows(padded.shape[1], padded.shape[0], ckpt.gamma, cfg["k"]))
    log.info("%s: heatmap built from %d windows (gamma=%d, k=%d)",
             stem, n_windows, ckpt.gamma, cfg["k"])
    heat = imagedata.crop_center(heatmap.values, ow, oh)
    coverage = imagedata.crop_center(heatmap.coverage.astype(np.float64), ow, oh).astype(np.int64)

    params = superpixel.SegmentationParams(scale=cfg["scale"],
                                           smoothing_sigma=cfg["smoothing_sigma"],
                                           min_size=cfg["min_size"])
    labels = superpixel.felzenszwalb(query, params)
    pred = superpixel.select_segment(labels, heat)

    out_dir = cfg["out"]
    pfm_path = os.path.join(out_dir, f"{stem}_heat.pfm")
    localization.save_heatmap(localization.Heatmap(heat, coverage),
                              pfm_path, ckpt.gamma, cfg["k"], ckpt_digest)
    imagedata.save_slice(pred.astype(np.float64) * 255.0,
                         os.path.join(out_dir, f"{stem}_pred.png"))

    heat_img = imagedata.minmax_normalize(heat)
    panels = [
        _gray_rgb(query),
        _hot_rgb(heat_img / 255.0),
        _boundary_overlay(query, labels),
        np.clip(_gray_rgb(query) * 0.5 + _hot_rgb(heat_img / 255.0) * 0.5, 0, 255),
        _gray_rgb(pred.astype(np.float64) * 255.0),
    ]
    if truth_path:
        panels.append(_gray_rgb(imagedata.load_slice(truth_path)))
    imagedata.save_rgb(_panel_strip(panels), os.path.join(out_dir, f"{stem}_panels.png"))
    return stem


def cmd_segment(cfg: dict) -> int:
    ckpt_path = _require_file(cfg["checkpoint"], "checkpoint")
    ckpt = network.load_checkpoint(ckpt_path)
    if cfg["gamma"] is not None and cfg["gamma"] != ckpt.gamma:
        raise UsageError(
            f"config gamma={cfg['gamma']} does not match checkpoint gamma={ckpt.gamma}"
        )
    with open(ckpt_path, "rb") as fh:
        ckpt_digest = hashlib.sha256(fh.read()).hexdigest()

    input_path = _require_file(cfg["input"], "input")
    targets = []
    if input_path.endswith(".csv"):
        base = os.path.dirname(input_path)
        for e in synth.read_manifest(input_path):
            if e.label == "anomalous":
                truth = os.path.join(base, e.mask_filename) if e.mask_filename else None
                targets.append((os.path.join(base, e.filename), truth))
    else:
        targets.append((input_path, None))
    if not targets:
        raise UsageError(f"{input_path}: no anomalous slices to segment")

    os.makedirs(cfg["out"], exist_ok=True)
    if cfg["workers"] > 1:
        with ThreadPoolExecutor(max_workers=cfg["workers"]) as pool:
            list(pool.map(lambda t: _segment_one(t[0], t[1], ckpt, ckpt_digest, cfg), targets))
    else:
        for slice_path, truth in targets:
            _segment_one(slice_path, truth, ckpt, ckpt_digest, cfg)
    log.info("segmented %d slice(s) into %s", len(targets), cfg["out"])
    return 0


def _write_metrics_csv(path, rows, summary):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "dice", "psnr", "ssim"])
        for row in rows:
            writer.writerow(row)
        for row in summary:
            writer.writerow(row)


def _fmt(value) -> str:
    if value is None:
        return ""
    if math.isinf(value):
        return "inf"
    return f"{value:.6f}"


def cmd_evaluate(cfg: dict) -> int:
    manifest = _manifest_path(cfg["data"])
    base = os.path.dirname(manifest)
    os.makedirs(cfg["out"], exist_ok=True)
    out_csv = os.path.join(cfg["out"], "metrics.csv")
    rows, summary = [], []

    if cfg["mode"] == "masks":
        if not cfg["predictions"]:
            raise UsageError("evaluate --mode masks requires --predictions")
        entries = [e for e in synth.read_manifest(manifest) if e.label == "anomalous"]
        if not entries:
            raise UsageError(f"{manifest}: no anomalous samples with ground truth")
        dices = []
        for e in entries:
            stem = os.path.splitext(e.filename)[0]
            pred_path = os.path.join(cfg["predictions"], f"{stem}_pred.png")
            if not os.path.isfile(pred_path):
                raise ValueError(f"unpaired sample: no prediction {pred_path}")
            truth = imagedata.load_slice(os.path.join(base, e.mask_filename)) > 127
            pred = imagedata.load_slice(pred_path) > 127
            d = metrics.dice(pred, truth)
            dices.append(d)
            rows.append([stem, _fmt(d), "", ""])
        rep = metrics.report(dices)
        summary = [["mean", _fmt(rep.mean), "", ""], ["std", _fmt(rep.std), "", ""]]
        print(f"dice: {rep}")
    elif cfg["mode"] == "reconstruction":
        if not cfg["checkpoint"]:
            raise UsageError("evaluate --mode reconstruction requires --checkpoint")
        ckpt = network.load_checkpoint(_require_file(cfg["checkpoint"], "checkpoint"))
        entries, slices = _load_dataset_slices(manifest, "normal")
        if not entries:
            raise UsageError(f"{manifest}: no normal samples to reconstruct")
        generator = ckpt.build_generator() if ckpt.kind == "generator" else None
        psnrs, ssims = [], []
        for i, (e, slice_) in enumerate(zip(entries, slices)):
            stem = os.path.splitext(e.filename)[0]
            if generator is not None:
                gw, gh = ckpt.g_spec.width, ckpt.g_spec.height
                if slice_.shape != (gh, gw):
                    slice_ = imagedata.pad_to(slice_, gw, gh)
                reconstruct = localization.make_reconstructor(generator)
            else:
                reconstruct = localization.perfect_reconstructor(slice_)
            rng = np.random.default_rng([cfg["seed"], i])
            masked, _ = random_mask(slice_, ckpt.gamma, rng)
            recon = reconstruct(masked[None, :, :])[0]
            p = metrics.psnr(slice_, recon)
            s = metrics.ssim(slice_, recon)
            psnrs.append(p)
            ssims.append(s)
            rows.append([stem, "", _fmt(p), _fmt(s)])
        rep_p, rep_s = metrics.report(psnrs), metrics.report(ssims)
        summary = [["mean", "", _fmt(rep_p.mean), _fmt(rep_s.mean)],
                   ["std", "", _fmt(rep_p.std), _fmt(rep_s.std)]]
        print(f"psnr: {rep_p}")
        print(f"ssim: {rep_s}")
    else:
        raise UsageError(f"unknown evaluate mode {cfg['mode']!r}")

    _write_metrics_csv(out_csv, rows, summary)
    log.info("metrics: %s", out_csv)
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "segment": cmd_segment,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return 1
        file_values = read_config_file(args.config) if args.config else {}
        cli_values = {k.name: getattr(args, k.name) for k in COMMAND_KEYS[args.command]}
        cfg = resolve(args.command, file_values, cli_values)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
