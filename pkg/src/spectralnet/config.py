"""Flat ``key = value`` training configuration.

One setting per line, ``#`` starts a comment, ``key: value`` is accepted as
well. Keys prefixed with ``siamese_`` configure the affinity network;
``hidden`` and ``siamese_hidden`` take a layer list such as
``relu:128,relu:64``. Optional values accept ``none``.
"""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, Tuple

from .affinity import DISTANCES, SCALE_MODES, AffinityConfig
from .errors import ConfigTypeError, UnknownKey
from .nn import ACTIVATIONS, parse_layers
from .siamese import SiameseConfig
from .trainer import LOSS_SCALINGS, LOSS_VARIANTS, OUTPUT_GRADS, SpectralConfig


@dataclass(frozen=True)
class TrainConfig:
    spectral: SpectralConfig = field(
        default_factory=lambda: SpectralConfig(affinity=AffinityConfig(distance="siamese"))
    )
    siamese: SiameseConfig = field(default_factory=SiameseConfig)
    labels_frac: float = 0.0

    @property
    def use_siamese(self):
        return self.spectral.affinity.distance == "siamese"

    def with_seed(self, seed):
        return replace(self, spectral=replace(self.spectral, seed=seed))


def _int(lo):
    def parse(text):
        try:
            v = int(text)
        except ValueError:
            raise TypeError(f"expected an integer, got {text!r}") from None
        if v < lo:
            raise TypeError(f"must be >= {lo}, got {v}")
        return v

    return parse


def _float(lo=None, hi=None, open_lo=False):
    def parse(text):
        try:
            v = float(text)
        except ValueError:
            raise TypeError(f"expected a number, got {text!r}") from None
        if v != v or v in (float("inf"), float("-inf")):
            raise TypeError(f"must be finite, got {text}")
        if lo is not None and (v < lo or (open_lo and v == lo)):
            raise TypeError(f"must be {'>' if open_lo else '>='} {lo}, got {v}")
        if hi is not None and v > hi:
            raise TypeError(f"must be <= {hi}, got {v}")
        return v

    return parse


def _choice(options):
    def parse(text):
        if text not in options:
            raise TypeError(f"must be one of {', '.join(options)}; got {text!r}")
        return text

    return parse


def _bool(text):
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise TypeError(f"expected a boolean, got {text!r}")


def _optional(inner):
    def parse(text):
        return None if text.lower() == "none" else inner(text)

    return parse


def _layers(text):
    try:
        return tuple(parse_layers(text))
    except ValueError as exc:
        raise TypeError(str(exc)) from None


_POS_FLOAT = _float(0.0, open_lo=True)
_DECAY = _float(0.0, 1.0, open_lo=True)

# key -> (section, field, parser)
KEYS: Dict[str, Tuple[str, str, Callable]] = {
    "k": ("spectral", "k", _int(1)),
    "hidden": ("spectral", "hidden", _layers),
    "out_activation": ("spectral", "out_activation", _choice(ACTIVATIONS)),
    "batch_size": ("spectral", "batch_size", _int(1)),
    "ortho_batch_size": ("spectral", "ortho_batch_size", _int(1)),
    "loss_variant": ("spectral", "loss_variant", _choice(LOSS_VARIANTS)),
    "loss_scaling": ("spectral", "loss_scaling", _choice(LOSS_SCALINGS)),
    "output_grad": ("spectral", "output_grad", _choice(OUTPUT_GRADS)),
    "lr": ("spectral", "lr", _POS_FLOAT),
    "lr_decay": ("spectral", "lr_decay", _DECAY),
    "patience": ("spectral", "patience", _int(1)),
    "lr_floor": ("spectral", "lr_floor", _POS_FLOAT),
    "iters_per_epoch": ("spectral", "iters_per_epoch", _int(1)),
    "max_epochs": ("spectral", "max_epochs", _int(1)),
    "val_frac": ("spectral", "val_frac", _float(0.0, 0.5)),
    "seed": ("spectral", "seed", _int(0)),
    "n_neighbors": ("affinity", "n_neighbors", _int(1)),
    "scale_mode": ("affinity", "scale_mode", _choice(SCALE_MODES)),
    "scale_k": ("affinity", "scale_k", _int(1)),
    "fixed_sigma": ("affinity", "fixed_sigma", _optional(_POS_FLOAT)),
    "distance": ("affinity", "distance", _choice(DISTANCES)),
    "labels_frac": ("top", "labels_frac", _float(0.0, 1.0)),
    "siamese_n_pos_neighbors": ("siamese", "n_pos_neighbors", _int(1)),
    "siamese_margin": ("siamese", "margin", _POS_FLOAT),
    "siamese_hidden": ("siamese", "hidden", _layers),
    "siamese_embed_dim": ("siamese", "embed_dim", _optional(_int(1))),
    "siamese_out_activation": ("siamese", "out_activation", _choice(ACTIVATIONS)),
    "siamese_sample_one": ("siamese", "sample_one", _bool),
    "siamese_batch_size": ("siamese", "batch_size", _int(1)),
    "siamese_lr": ("siamese", "lr", _POS_FLOAT),
    "siamese_lr_decay": ("siamese", "lr_decay", _DECAY),
    "siamese_patience": ("siamese", "patience", _int(1)),
    "siamese_lr_floor": ("siamese", "lr_floor", _POS_FLOAT),
    "siamese_max_epochs": ("siamese", "max_epochs", _int(1)),
    "siamese_val_frac": ("siamese", "val_frac", _float(0.0, 0.5)),
}


def parse_config(text, base=None):
    """Parse config ``text`` over ``base`` (defaults when None)."""
    cfg = TrainConfig() if base is None else base
    updates = {"spectral": {}, "affinity": {}, "siamese": {}, "top": {}}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        eq, colon = line.find("="), line.find(":")
        cuts = [i for i in (eq, colon) if i > 0]
        if not cuts:
            raise ConfigTypeError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        cut = min(cuts)
        key, value = line[:cut].strip(), line[cut + 1:].strip()
        if key not in KEYS:
            raise UnknownKey(f"unknown key {key!r}", line=lineno)
        section, name, parse = KEYS[key]
        try:
            updates[section][name] = parse(value)
        except TypeError as exc:
            raise ConfigTypeError(f"{key}: {exc}", line=lineno) from None
    try:
        affinity = replace(cfg.spectral.affinity, **updates["affinity"])
        spectral = replace(cfg.spectral, affinity=affinity, **updates["spectral"])
        siamese = replace(cfg.siamese, **updates["siamese"])
        return replace(cfg, spectral=spectral, siamese=siamese, **updates["top"])
    except ValueError as exc:
        # cross-field checks (e.g. batch size below k) done by the dataclasses
        raise ConfigTypeError(str(exc)) from None


def load_config(path):
    return parse_config(Path(path).read_text())


def dump_config(cfg):
    """Inverse of :func:`parse_config`: every key, one per line."""
    sections = {"spectral": cfg.spectral, "affinity": cfg.spectral.affinity, "siamese": cfg.siamese, "top": cfg}
    lines = []
    for key, (section, name, _) in KEYS.items():
        value = getattr(sections[section], name)
        if name == "hidden":
            value = ",".join(f"{s.activation}:{s.width}" for s in value)
        elif value is None:
            value = "none"
        elif isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


