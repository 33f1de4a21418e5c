"""Command-conditioned motion model.

For every discrete command the model keeps one dynamic Gaussian mixture
over the robot's change in pose.  Optionally each training vector is
augmented with a terrain measurement z = (pitch, roll) taken before the
command runs; the stored mixture is then a joint density over x || z (pose
delta block first, terrain block last) and querying conditions the joint
on the observed terrain:

    p(x | c, z) = p(x || z | c) / p(z | c)

Both sides of that ratio are mixtures of the same components, so the
conditional is again a Gaussian mixture: component i is conditioned on z
in closed form and reweighted by w_i times its terrain-block marginal
density at z.

Models are serialized to a single JSON document with exact decimal
round-trip of all floating point values.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .gaussian import Gaussian, IndexSplit
from .mixture import DynamicGaussianMixture, WeightedGaussian

MODEL_FORMAT = "dgmm-motion-model/1"

TWO_PI = 2.0 * math.pi


class TerrainSupportError(ValueError):
    """Raised when a query terrain vector lies so far outside the training
    data that every component's terrain marginal underflows to zero."""


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.fmod(a + math.pi, TWO_PI)
    if w <= 0.0:
        w += TWO_PI
    return w - math.pi


@dataclass(frozen=True)
class CommandKey:
    """Discrete command <long, lat, turn>, each from {-0.5, 0, +0.5}."""

    long: float
    lat: float
    turn: float

    def __post_init__(self):
        for name in ("long", "lat", "turn"):
            v = float(getattr(self, name))
            if v not in (-0.5, 0.0, 0.5):
                raise ValueError(f"command {name} must be one of -0.5, 0, +0.5; got {v}")
            object.__setattr__(self, name, v)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.long, self.lat, self.turn)

    def is_noop(self) -> bool:
        return self.long == 0.0 and self.lat == 0.0 and self.turn == 0.0

    @classmethod
    def parse(cls, text: str) -> "CommandKey":
        parts = text.split(",")
        if len(parts) != 3:
            raise ValueError(f"command must be three comma-separated numbers, got {text!r}")
        return cls(*(float(p) for p in parts))

    def __str__(self):
        return f"{self.long:g},{self.lat:g},{self.turn:g}"


@dataclass(frozen=True)
class Pose:
    """Robot pose: position plus attitude angles stored in (-pi, pi]."""

    x: float
    y: float
    z: float
    roll: float
    pitch: float
    yaw: float

    def __post_init__(self):
        for name in ("roll", "pitch", "yaw"):
            object.__setattr__(self, name, wrap_angle(getattr(self, name)))


@dataclass(frozen=True)
class DeltaPose:
    """Change in pose over one command, angles wrapped to (-pi, pi]."""

    dx: float
    dy: float
    dz: float
    droll: float
    dpitch: float
    dyaw: float

    def __post_init__(self):
        for name in ("droll", "dpitch", "dyaw"):
            object.__setattr__(self, name, wrap_angle(getattr(self, name)))

    def as_vector(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dz, self.droll, self.dpitch, self.dyaw])

    @classmethod
    def from_vector(cls, v) -> "DeltaPose":
        v = np.asarray(v, dtype=float).reshape(-1)
        if v.shape[0] != 6:
            raise ValueError("pose delta vector must have 6 components")
        return cls(*v)


@dataclass(frozen=True)
class TerrainVector:
    """Terrain proxy measured before a command runs: robot pitch and roll."""

    pitch: float
    roll: float

    def __post_init__(self):
        if not (math.isfinite(self.pitch) and math.isfinite(self.roll)):
            raise ValueError("terrain angles must be finite")

    def as_vector(self) -> np.ndarray:
        return np.array([self.pitch, self.roll])

    @classmethod
    def from_vector(cls, v) -> "TerrainVector":
        v = np.asarray(v, dtype=float).reshape(-1)
        if v.shape[0] != 2:
            raise ValueError("terrain vector must have 2 components")
        return cls(*v)


def pose_delta(prev: Pose, curr: Pose) -> DeltaPose:
    """Componentwise pose difference with angle wrap-around."""
    return DeltaPose(
        curr.x - prev.x,
        curr.y - prev.y,
        curr.z - prev.z,
        wrap_angle(curr.roll - prev.roll),
        wrap_angle(curr.pitch - prev.pitch),
        wrap_angle(curr.yaw - prev.yaw),
    )


class Standardizer:
    """Per-dimension affine map to roughly unit scale: u = (v - offset)/scale.

    The identity creation covariance of new mixture components is scale
    sensitive, so training data should be near unit scale.  Constant
    dimensions get scale 1 to stay well defined.
    """

    def __init__(self, offset, scale):
        self.offset = np.asarray(offset, dtype=float).reshape(-1)
        self.scale = np.asarray(scale, dtype=float).reshape(-1)
        if self.offset.shape != self.scale.shape:
            raise ValueError("offset and scale must have the same length")
        if np.any(self.scale <= 0):
            raise ValueError("scales must be positive")

    @classmethod
    def fit(cls, points: np.ndarray) -> "Standardizer":
        points = np.asarray(points, dtype=float)
        offset = points.mean(axis=0)
        scale = points.std(axis=0)
        scale = np.where(scale > 1e-12, scale, 1.0)
        return cls(offset, scale)

    def transform(self, v: np.ndarray) -> np.ndarray:
        return (np.asarray(v, dtype=float) - self.offset) / self.scale

    def log_jacobian(self, indices) -> float:
        """log of the density change of variables over the given dims:
        p_orig(v) = p_std(u) * exp(log_jacobian)."""
        return float(-np.sum(np.log(self.scale[list(indices)])))


class MotionModel:
    """Map from command keys to dynamic Gaussian mixtures over pose deltas,
    optionally augmented with a terrain block."""

    def __init__(self, k: float, x_dim: int = 6, z_dim: int = 0,
                 standardizer: Standardizer | None = None,
                 creation_cov_scale: float = 1.0):
        if x_dim < 1 or z_dim < 0:
            raise ValueError("x_dim must be >= 1 and z_dim >= 0")
        if standardizer is not None and standardizer.offset.shape[0] != x_dim + z_dim:
            raise ValueError("standardizer length must equal x_dim + z_dim")
        if creation_cov_scale <= 0:
            raise ValueError("creation_cov_scale must be positive")
        self.k = float(k)
        self.x_dim = int(x_dim)
        self.z_dim = int(z_dim)
        self.standardizer = standardizer
        self.creation_cov_scale = float(creation_cov_scale)
        self.models: dict[CommandKey, DynamicGaussianMixture] = {}

    @property
    def dim(self) -> int:
        return self.x_dim + self.z_dim

    @property
    def augmented(self) -> bool:
        return self.z_dim > 0

    def commands(self) -> list[CommandKey]:
        return sorted(self.models, key=CommandKey.as_tuple)

    def mixture_for(self, c: CommandKey) -> DynamicGaussianMixture:
        try:
            return self.models[c]
        except KeyError:
            raise KeyError(f"no model for command {c}") from None

    # -- training ----------------------------------------------------------

    def _training_vector(self, x: DeltaPose, z: TerrainVector | None) -> np.ndarray:
        if self.augmented:
            if z is None:
                raise ValueError("model is terrain-augmented; a terrain vector is required")
            d = np.concatenate([x.as_vector(), z.as_vector()])
        else:
            if z is not None:
                raise ValueError("model has no terrain block; got a terrain vector")
            d = x.as_vector()
        if self.standardizer is not None:
            d = self.standardizer.transform(d)
        return d

    def record_sample(self, c: CommandKey, x: DeltaPose, z: TerrainVector | None,
                      rng: np.random.Generator) -> None:
        """Add one (command, pose delta, optional terrain) observation."""
        if c.is_noop():
            raise ValueError("the no-op command <0,0,0> is not trainable")
        d = self._training_vector(x, z)
        model = self.models.get(c)
        if model is None:
            model = self.models[c] = DynamicGaussianMixture(self.dim)
        model.add_sample(d, self.k, rng, new_cov_scale=self.creation_cov_scale)

    def record_step(self, c: CommandKey, prev: Pose, curr: Pose,
                    z: TerrainVector | None, rng: np.random.Generator) -> None:
        """One cycle of the incremental update loop: difference the pose
        measurements taken around the command, then record the sample."""
        self.record_sample(c, pose_delta(prev, curr), z, rng)

    # -- queries -------------------------------------------------------------

    def _x_vector(self, x) -> np.ndarray:
        v = x.as_vector() if isinstance(x, DeltaPose) else np.asarray(x, dtype=float).reshape(-1)
        if v.shape[0] != self.x_dim:
            raise ValueError(f"query has dimension {v.shape[0]}, expected {self.x_dim}")
        return v

    def motion_density(self, c: CommandKey, x) -> float:
        """p(x | c) for an un-augmented model, in original sample units."""
        if self.augmented:
            raise ValueError("model is terrain-augmented; use conditional_motion_density")
        v = self._x_vector(x)
        if self.standardizer is not None:
            u = self.standardizer.transform(v)
            return float(self.mixture_for(c).density(u)) * math.exp(
                self.standardizer.log_jacobian(range(self.x_dim))
            )
        return float(self.mixture_for(c).density(v))

    def conditional_motion_density(self, c: CommandKey, z: TerrainVector) -> DynamicGaussianMixture:
        """Mixture over the pose-delta block representing p(x | c, z).

        Component i of the joint is conditioned on the terrain block at z
        and reweighted by w_i times its terrain marginal at z, which makes
        the returned mixture pointwise equal to joint(x || z) / marginal(z).
        Lives in the model's internal (possibly standardized) space; use
        conditional_density for values in original units.
        """
        if not self.augmented:
            raise ValueError("model has no terrain block")
        joint = self.mixture_for(c)
        zv = z.as_vector() if isinstance(z, TerrainVector) else np.asarray(z, dtype=float).reshape(-1)
        if zv.shape[0] != self.z_dim:
            raise ValueError(f"terrain vector has dimension {zv.shape[0]}, expected {self.z_dim}")
        if self.standardizer is not None:
            zv = self.standardizer.transform(
                np.concatenate([np.zeros(self.x_dim), zv])
            )[self.x_dim:]
        split = IndexSplit.tail(self.dim, self.z_dim)
        z_block = list(range(self.x_dim, self.dim))
        parts = []
        for comp in joint.components:
            g = comp.pd_gaussian()
            z_marginal = g.marginal(z_block).density(zv)
            weight = comp.w * float(z_marginal)
            if weight <= 0.0:
                continue
            parts.append(WeightedGaussian(g.conditional(split, zv), weight))
        if not parts:
            raise TerrainSupportError(
                f"terrain {np.array2string(zv, precision=4)} is far outside the training support"
            )
        return DynamicGaussianMixture(self.x_dim, parts)

    def conditional_density(self, c: CommandKey, x, z: TerrainVector) -> float:
        """p(x | c, z) in original sample units."""
        cond = self.conditional_motion_density(c, z)
        v = self._x_vector(x)
        if self.standardizer is not None:
            u = (v - self.standardizer.offset[: self.x_dim]) / self.standardizer.scale[: self.x_dim]
            return float(cond.density(u)) * math.exp(
                self.standardizer.log_jacobian(range(self.x_dim))
            )
        return float(cond.density(v))

    def log_density(self, c: CommandKey, x, z: TerrainVector | None = None) -> float:
        """log p(x | c[, z]) in original units; -inf when the density
        underflows (callers decide how to floor)."""
        dens = self.conditional_density(c, x, z) if self.augmented else self.motion_density(c, x)
        with np.errstate(divide="ignore"):
            return float(np.log(dens))

    # -- persistence -----------------------------------------------------------

    def to_dict(self, invocation: dict | None = None) -> dict:
        doc = {
            "format": MODEL_FORMAT,
            "k": self.k,
            "layout": {"x_dim": self.x_dim, "z_dim": self.z_dim},
            "creation_cov_scale": self.creation_cov_scale,
            "standardizer": None
            if self.standardizer is None
            else {
                "offset": self.standardizer.offset.tolist(),
                "scale": self.standardizer.scale.tolist(),
            },
            "commands": [
                {
                    "key": list(c.as_tuple()),
                    "components": [
                        {
                            "w": comp.w,
                            "mean": comp.g.mean.tolist(),
                            "cov": comp.g.cov.reshape(-1).tolist(),
                        }
                        for comp in self.models[c].components
                    ],
                }
                for c in self.commands()
            ],
        }
        if invocation is not None:
            doc["invocation"] = invocation
        return doc

    def save(self, path, invocation: dict | None = None) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(invocation), f, indent=1)
            f.write("\n")

    @classmethod
    def from_dict(cls, doc: dict) -> "MotionModel":
        def fail(field: str, why: str):
            raise ValueError(f"model file: field '{field}': {why}")

        if not isinstance(doc, dict):
            fail("<root>", "not a JSON object")
        if doc.get("format") != MODEL_FORMAT:
            fail("format", f"expected {MODEL_FORMAT!r}, got {doc.get('format')!r}")
        k = _expect_number(doc, "k", fail)
        layout = doc.get("layout")
        if not isinstance(layout, dict):
            fail("layout", "missing or not an object")
        x_dim = int(_expect_number(layout, "x_dim", fail, prefix="layout."))
        z_dim = int(_expect_number(layout, "z_dim", fail, prefix="layout."))
        dim = x_dim + z_dim
        if "creation_cov_scale" in doc:
            scale = _expect_number(doc, "creation_cov_scale", fail)
            if scale <= 0:
                fail("creation_cov_scale", "must be positive")
        else:
            scale = 1.0
        std = None
        raw_std = doc.get("standardizer")
        if raw_std is not None:
            if not isinstance(raw_std, dict):
                fail("standardizer", "not an object or null")
            offset = _expect_floats(raw_std, "offset", dim, fail, prefix="standardizer.")
            std_scale = _expect_floats(raw_std, "scale", dim, fail, prefix="standardizer.")
            if any(s <= 0 for s in std_scale):
                fail("standardizer.scale", "entries must be positive")
            std = Standardizer(offset, std_scale)
        mm = cls(k=k, x_dim=x_dim, z_dim=z_dim, standardizer=std, creation_cov_scale=scale)
        commands = doc.get("commands")
        if not isinstance(commands, list):
            fail("commands", "missing or not a list")
        for ci, entry in enumerate(commands):
            where = f"commands[{ci}]"
            if not isinstance(entry, dict):
                fail(where, "not an object")
            key = _expect_floats(entry, "key", 3, fail, prefix=where + ".")
            command = CommandKey(*key)
            if command in mm.models:
                fail(f"{where}.key", "duplicate command key")
            comps_raw = entry.get("components")
            if not isinstance(comps_raw, list):
                fail(f"{where}.components", "missing or not a list")
            comps = []
            for gi, comp in enumerate(comps_raw):
                cwhere = f"{where}.components[{gi}]"
                if not isinstance(comp, dict):
                    fail(cwhere, "not an object")
                w = _expect_number(comp, "w", fail, prefix=cwhere + ".")
                if w <= 0 or not math.isfinite(w):
                    fail(f"{cwhere}.w", "must be a positive finite number")
                mean = np.array(_expect_floats(comp, "mean", dim, fail, prefix=cwhere + "."))
                cov_flat = _expect_floats(comp, "cov", dim * dim, fail, prefix=cwhere + ".")
                cov = np.array(cov_flat).reshape(dim, dim)
                try:
                    g = Gaussian(mean, cov)
                except ValueError as exc:
                    fail(f"{cwhere}.cov", str(exc))
                comps.append(WeightedGaussian(g, w, creation_cov=scale * np.eye(dim)))
            mm.models[command] = DynamicGaussianMixture(dim, comps)
        return mm

    @classmethod
    def load(cls, path) -> "MotionModel":
        with open(path, encoding="utf-8") as f:
            try:
                doc = json.load(f)
            except json.JSONDecodeError as exc:
                raise ValueError(f"model file: field '<root>': invalid JSON ({exc})") from exc
        return cls.from_dict(doc)


def _expect_number(obj: dict, name: str, fail, prefix: str = "") -> float:
    val = obj.get(name)
    if not isinstance(val, (int, float)) or isinstance(val, bool) or not math.isfinite(val):
        fail(prefix + name, "missing or not a finite number")
    return float(val)


def _expect_floats(obj: dict, name: str, length: int, fail, prefix: str = "") -> list[float]:
    val = obj.get(name)
    if not isinstance(val, list) or len(val) != length:
        fail(prefix + name, f"missing or not a list of {length} numbers")
    out = []
    for i, v in enumerate(val):
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            fail(f"{prefix}{name}[{i}]", "not a finite number")
        out.append(float(v))
    return out
