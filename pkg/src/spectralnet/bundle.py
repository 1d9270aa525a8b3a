"""On-disk model bundle: a directory with a manifest and plain-text parts.

    manifest.json   format tag, k, input width, which parts exist, settings
    spectral.txt    the spectral map (nn text format, output map included)
    siamese.txt     the Siamese network, only when affinities used it
    centroids.csv   k rows of embedding-space centroids
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .cluster import ClusterModel
from .data import load_csv, save_matrix
from .errors import DimensionMismatch, ParseError
from .nn import Mlp, load_model, save_model

BUNDLE_FORMAT = "spectralnet-bundle"
BUNDLE_VERSION = 1


@dataclass
class Bundle:
    model: ClusterModel
    siamese: Optional[Mlp] = None
    settings: dict = field(default_factory=dict)


def save_bundle(bundle, directory):
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    save_model(bundle.model.spectral_map, out / "spectral.txt")
    save_matrix(bundle.model.centroids, out / "centroids.csv")
    if bundle.siamese is not None:
        save_model(bundle.siamese, out / "siamese.txt")
    manifest = {
        "format": BUNDLE_FORMAT,
        "version": BUNDLE_VERSION,
        "k": int(bundle.model.k),
        "input_dim": int(bundle.model.spectral_map.input_dim),
        "files": {
            "spectral": "spectral.txt",
            "centroids": "centroids.csv",
            "siamese": "siamese.txt" if bundle.siamese is not None else None,
        },
        "settings": bundle.settings,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_bundle(directory):
    src = Path(directory)
    try:
        manifest = json.loads((src / "manifest.json").read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"manifest.json: {exc.msg}", line=exc.lineno) from None
    if manifest.get("format") != BUNDLE_FORMAT:
        raise ParseError(f"{src / 'manifest.json'} is not a model bundle manifest", line=1)
    if manifest.get("version") != BUNDLE_VERSION:
        raise ParseError(f"unsupported bundle version {manifest.get('version')!r}", line=1)
    files = manifest["files"]
    spectral = load_model(src / files["spectral"])
    centroids = load_csv(src / files["centroids"]).features
    siamese = load_model(src / files["siamese"]) if files.get("siamese") else None
    if centroids.shape != (manifest["k"], spectral.output_dim):
        raise DimensionMismatch(f"centroids are {centroids.shape}, expected ({manifest['k']}, {spectral.output_dim})")
    return Bundle(ClusterModel(spectral, centroids), siamese, manifest.get("settings", {}))

