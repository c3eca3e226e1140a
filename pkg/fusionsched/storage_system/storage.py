import csv
import io
import json
import os
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..entities import ProcessModel, SensorModel
from ..errors import CheckpointError, StorageError, UsageError
from ..learning.autodiff_nn import Mlp
from ..logger import get_logger
from ..utils import sanitize_name
from .file_system import FileSystem

_logger = get_logger("storage")

SNAPSHOT_HEADER = "# fusionsched system snapshot v1"
CHECKPOINT_FORMAT = "fusionsched-checkpoint-v1"
CHECKPOINT_DTYPE = "<f8"


def format_value(value: Any) -> str:
    """CSV / snapshot cell text; floats keep 17 significant digits so reparsing is exact."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


class Storage:
    """Path layout of an output directory."""

    def __init__(self, output_dir: str) -> None:
        self.output_dir = output_dir

    def get_path(self, *parts: str) -> str:
        """Join sanitized name parts below the output directory."""
        return os.path.join(self.output_dir, *(sanitize_name(p) for p in parts))


class ResultStorage(Storage):
    """CSV artifacts: summaries, learning curves, traces, transcripts, delay statistics."""

    def write_rows(self, name: str, columns: Sequence[str], rows: Iterable[Dict[str, Any]]) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row[c]) for c in columns])
        path = self.get_path(name)
        FileSystem.create_file(path, buffer.getvalue())
        _logger.info(f"wrote {path}")
        return path

    def read_rows(self, name: str) -> List[Dict[str, str]]:
        content = FileSystem.read_file(self.get_path(name))
        if content is None:
            raise StorageError(f"No result file {self.get_path(name)}")
        return list(csv.DictReader(io.StringIO(content)))


class SnapshotStorage(Storage):
    """
    Plain-text dump of a system realization (A, Q and every sensor), in
    `matrix <name> <rows> <cols>` blocks and `scalar <name> <value>` lines.
    """

    @staticmethod
    def render(model: ProcessModel, sensors: Sequence[SensorModel]) -> str:
        lines = [SNAPSHOT_HEADER]

        def scalar(name: str, value: Any) -> None:
            lines.append(f"scalar {name} {format_value(value)}")

        def matrix(name: str, mat: np.ndarray) -> None:
            lines.append(f"matrix {name} {mat.shape[0]} {mat.shape[1]}")
            lines.extend(" ".join(format_value(v) for v in row) for row in mat)

        scalar("n_states", model.dim)
        scalar("n_sensors", len(sensors))
        matrix("A", model.A)
        matrix("Q", model.Q)
        for s in sensors:
            scalar(f"sensor.{s.id}.sample_prob", s.sample_prob)
            scalar(f"sensor.{s.id}.distance", s.distance)
            if s.energy is not None:
                scalar(f"sensor.{s.id}.energy", s.energy)
            matrix(f"sensor.{s.id}.C", s.C)
            matrix(f"sensor.{s.id}.R", s.R)
        return "\n".join(lines) + "\n"

    @staticmethod
    def parse(text: str) -> Tuple[ProcessModel, List[SensorModel]]:
        lines = text.splitlines()
        if not lines or lines[0].strip() != SNAPSHOT_HEADER:
            raise StorageError("Not a fusionsched system snapshot")
        scalars: Dict[str, str] = {}
        matrices: Dict[str, np.ndarray] = {}
        i = 1
        try:
            while i < len(lines):
                parts = lines[i].split()
                i += 1
                if not parts or parts[0].startswith("#"):
                    continue
                if parts[0] == "scalar":
                    scalars[parts[1]] = parts[2]
                elif parts[0] == "matrix":
                    rows, cols = int(parts[2]), int(parts[3])
                    values = [[float(v) for v in lines[i + r].split()] for r in range(rows)]
                    mat = np.array(values, dtype=float).reshape(rows, cols)
                    matrices[parts[1]] = mat
                    i += rows
                else:
                    raise StorageError(f"Unknown snapshot entry '{parts[0]}' on line {i}")
            model = ProcessModel(A=matrices["A"], Q=matrices["Q"])
            sensors = []
            for sid in range(1, int(scalars["n_sensors"]) + 1):
                energy = scalars.get(f"sensor.{sid}.energy")
                sensors.append(SensorModel(
                    id=sid, C=matrices[f"sensor.{sid}.C"], R=matrices[f"sensor.{sid}.R"],
                    sample_prob=float(scalars[f"sensor.{sid}.sample_prob"]),
                    distance=float(scalars[f"sensor.{sid}.distance"]),
                    energy=None if energy is None else float(energy)))
        except (KeyError, IndexError, ValueError) as exc:
            raise StorageError(f"Malformed system snapshot: {exc}")
        return model, sensors

    def save(self, name: str, model: ProcessModel, sensors: Sequence[SensorModel]) -> str:
        path = self.get_path(name)
        FileSystem.create_file(path, self.render(model, sensors))
        return path

    def load(self, path: str) -> Tuple[ProcessModel, List[SensorModel]]:
        content = FileSystem.read_file(path)
        if content is None:
            raise StorageError(f"Snapshot not found: {path}")
        return self.parse(content)


class CheckpointStorage:
    """
    Actor and critic parameters in one binary file: a single JSON header
    line, then the float64 little-endian parameters of the actor followed by
    the critic, each as W_0, b_0, W_1, b_1, ... in row-major order.
    """

    @staticmethod
    def encode(actor: Mlp, critic: Mlp, seed: int, extra: Optional[Dict[str, Any]] = None) -> bytes:
        header = {
            "format": CHECKPOINT_FORMAT,
            "layer_sizes": {"actor": list(actor.layer_sizes), "critic": list(critic.layer_sizes)},
            "seed": int(seed),
            "dtype": CHECKPOINT_DTYPE,
            "n_params": actor.n_params + critic.n_params,
        }
        if extra:
            header["meta"] = extra
        payload = np.concatenate([actor.flat(), critic.flat()]).astype(CHECKPOINT_DTYPE).tobytes()
        return json.dumps(header, sort_keys=True).encode("utf-8") + b"\n" + payload

    @staticmethod
    def decode(data: bytes) -> Tuple[Mlp, Mlp, Dict[str, Any]]:
        head, sep, payload = data.partition(b"\n")
        if not sep:
            raise CheckpointError("Checkpoint has no header line")
        try:
            header = json.loads(head.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"Corrupt checkpoint header: {exc}")
        if header.get("format") != CHECKPOINT_FORMAT or header.get("dtype") != CHECKPOINT_DTYPE:
            raise CheckpointError(f"Unsupported checkpoint format {header.get('format')!r}")
        if len(payload) % 8:
            raise CheckpointError(f"Checkpoint payload of {len(payload)} bytes is not a float64 array")
        values = np.frombuffer(payload, dtype=CHECKPOINT_DTYPE)
        if values.size != header.get("n_params"):
            raise CheckpointError(f"Checkpoint holds {values.size} parameters, header says {header.get('n_params')}")
        try:
            sizes = header["layer_sizes"]
            actor_size = _count(sizes["actor"])
            actor = Mlp.from_flat(sizes["actor"], values[:actor_size].astype(np.float64))
            critic = Mlp.from_flat(sizes["critic"], values[actor_size:].astype(np.float64))
        except (KeyError, TypeError, UsageError) as exc:
            raise CheckpointError(f"Checkpoint layer sizes do not match its parameters: {exc}")
        if not (actor.is_finite() and critic.is_finite()):
            raise CheckpointError("Checkpoint contains non-finite parameters")
        return actor, critic, header

    def save(self, path: str, actor: Mlp, critic: Mlp, seed: int, extra: Optional[Dict[str, Any]] = None) -> str:
        FileSystem.write_bytes(path, self.encode(actor, critic, seed, extra))
        _logger.info(f"saved checkpoint {path}")
        return path

    def load(self, path: str) -> Tuple[Mlp, Mlp, Dict[str, Any]]:
        data = FileSystem.read_bytes(path)
        if data is None:
            raise CheckpointError(f"Checkpoint not found: {path}")
        return self.decode(data)


def _count(layer_sizes: Sequence[int]) -> int:
    return int(sum(a * b + b for a, b in zip(layer_sizes[:-1], layer_sizes[1:])))
