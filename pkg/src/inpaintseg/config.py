"""Flat key=value run configuration with CLI-flag overrides.

Every command-line flag has a config-file key of the same name (dashes
become underscores) and vice versa, so a config file fully determines a
run. Preset files shipped with the package (``paper-gamma8/16/32/64``,
``desk``) reproduce the published training regimes and the desk-scale
synthetic pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources


class ConfigError(ValueError):
    """Invalid or missing configuration; maps to the usage-error exit code."""


@dataclass(frozen=True)
class Key:
    name: str
    type: type
    default: object = None
    required: bool = False
    help: str = ""


COMMON_KEYS = [
    Key("seed", int, 0, help="seed for all random draws"),
    Key("workers", int, 1, help="parallel workers; 1 guarantees bit-exact determinism"),
]

SYNTH_KEYS = COMMON_KEYS + [
    Key("out", str, required=True, help="output dataset directory"),
    Key("width", int, 64, help="slice width in pixels"),
    Key("height", int, 64, help="slice height in pixels"),
    Key("n_normal", int, 0, help="number of healthy slices"),
    Key("n_anom", int, 0, help="number of anomalous slices"),
    Key("radius_min", float, 6.0, help="smallest anomaly radius"),
    Key("radius_max", float, 10.0, help="largest anomaly radius"),
]

TRAIN_KEYS = COMMON_KEYS + [
    Key("data", str, required=True, help="dataset directory containing manifest.csv"),
    Key("out", str, required=True, help="output directory for checkpoint and log"),
    Key("gamma", int, required=True, help="mask side length in pixels"),
    Key("batch_size", int, 16, help="minibatch size"),
    Key("iterations", int, 30000, help="training iterations"),
    Key("lr_g", float, 1e-4, help="generator learning rate"),
    Key("lr_d", float, 1e-3, help="discriminator learning rate"),
    Key("lambda_rec", float, 50.0, help="reconstruction loss weight"),
    Key("lambda_adv", float, 1.0, help="adversarial loss weight"),
    Key("beta1", float, 0.5, help="Adam first-moment decay"),
    Key("beta2", float, 0.999, help="Adam second-moment decay"),
    Key("epsilon", float, 1e-8, help="Adam epsilon"),
    Key("depth", int, 4, help="generator down/upsampling stages"),
    Key("base_channels", int, 32, help="generator channels at full resolution"),
    Key("d_depth", int, 4, help="discriminator conv stages"),
    Key("d_base_channels", int, 32, help="discriminator base channels"),
    Key("sn_iters", int, 1, help="power-iteration steps per training forward"),
]

SEGMENT_KEYS = COMMON_KEYS + [
    Key("checkpoint", str, required=True, help="trained model checkpoint"),
    Key("input", str, required=True, help="query image or dataset manifest.csv"),
    Key("out", str, required=True, help="output directory"),
    Key("k", int, 4, help="sliding-window step in pixels"),
    Key("gamma", int, None, help="expected mask size; must match the checkpoint"),
    Key("scale", float, 75.0, help="superpixel scale parameter"),
    Key("smoothing_sigma", float, 0.8, help="superpixel Gaussian pre-smoothing"),
    Key("min_size", int, 20, help="superpixel minimum segment size"),
    Key("batch", int, 64, help="windows per inference batch"),
]

EVALUATE_KEYS = COMMON_KEYS + [
    Key("mode", str, "masks", help="'masks' for Dice, 'reconstruction' for PSNR/SSIM"),
    Key("data", str, required=True, help="dataset manifest.csv"),
    Key("predictions", str, None, help="directory of *_pred.png masks (masks mode)"),
    Key("checkpoint", str, None, help="model checkpoint (reconstruction mode)"),
    Key("out", str, required=True, help="output directory for metrics.csv"),
]

COMMAND_KEYS = {
    "synth": SYNTH_KEYS,
    "train": TRAIN_KEYS,
    "segment": SEGMENT_KEYS,
    "evaluate": EVALUATE_KEYS,
}

_ALL_KEY_NAMES = {k.name for keys in COMMAND_KEYS.values() for k in keys}

PRESET_NAMES = ("paper-gamma8", "paper-gamma16", "paper-gamma32", "paper-gamma64", "desk")


def parse_config_text(text: str) -> dict:
    """Parse flat ``key = value`` lines; '#' starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key = key.strip()
        value = value.strip()
        if key not in _ALL_KEY_NAMES:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        values[key] = value
    return values


def read_config_file(path_or_preset: str) -> dict:
    """Read a config file path, falling back to a bundled preset name."""
    import os

    if os.path.isfile(path_or_preset):
        with open(path_or_preset) as fh:
            return parse_config_text(fh.read())
    name = path_or_preset.removesuffix(".cfg")
    if name in PRESET_NAMES:
        text = resources.files("inpaintseg").joinpath(f"presets/{name}.cfg").read_text()
        return parse_config_text(text)
    raise ConfigError(
        f"config {path_or_preset!r} is neither a file nor a preset "
        f"(presets: {', '.join(PRESET_NAMES)})"
    )


def _convert(key: Key, value):
    if value is None or isinstance(value, key.type):
        return value
    try:
        if key.type is int:
            return int(str(value), 0)
        return key.type(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"key {key.name!r}: cannot parse {value!r} as {key.type.__name__}") from exc


def resolve(command: str, file_values: dict, cli_values: dict) -> dict:
    """Merge defaults, config file and CLI overrides for one command.

    Keys from the file that belong to other commands are ignored, so one
    preset can describe a whole pipeline.
    """
    keys = COMMAND_KEYS[command]
    known = {k.name: k for k in keys}
    merged = {k.name: k.default for k in keys}
    for name, value in file_values.items():
        if name in known:
            merged[name] = _convert(known[name], value)
    for name, value in cli_values.items():
        if value is not None:
            if name not in known:
                raise ConfigError(f"flag --{name.replace('_', '-')} not valid for {command}")
            merged[name] = _convert(known[name], value)
    for key in keys:
        if key.required and merged[key.name] is None:
            raise ConfigError(f"{command}: missing required option {key.name!r} "
                              f"(flag --{key.name.replace('_', '-')} or config key)")
    return merged
