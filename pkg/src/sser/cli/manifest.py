import hashlib
import json
import os
import platform
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy

from .. import __version__


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(v):
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (str, int, float, bool)) or v is None:
        return v
    if isinstance(v, np.generic):
        return v.item()
    return str(v)


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: list = field(default_factory=list)
    inputs: list = field(default_factory=list)
    outputs: dict = field(default_factory=dict)   # path -> sha256
    versions: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0
    started: str = ""

    def to_json(self):
        return json.dumps(_jsonable(asdict(self)), indent=2, sort_keys=True)


def versions():
    return {"sser": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


class ManifestRecorder:
    """Collects the manifest of one command run and writes it next to the outputs."""

    def __init__(self, command, args):
        cfg = {k: v for k, v in vars(args).items() if k not in ("func", "config", "commands", "required")}
        self.manifest = RunManifest(command, cfg, versions=versions(),
                                    started=time.strftime("%Y-%m-%dT%H:%M:%S%z"))
        self._t = time.perf_counter()

    def seed(self, s):
        self.manifest.seeds.append(int(s))

    def input(self, path):
        self.manifest.inputs.append(str(path))

    def output(self, path):
        self.manifest.outputs[str(path)] = file_digest(path)

    def write(self, path):
        self.manifest.wall_clock_s = round(time.perf_counter() - self._t, 6)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.manifest.to_json() + "\n")
        return path


def manifest_path(output, directory=False):
    return os.path.join(output, "manifest.json") if directory else f"{output}.manifest.json"
