"""Parameter set for the sleep-wake flip-flop model.

All rates are per hour. ``k`` scales both homeostatic time constants and
``alpha_SCN`` sets the steepness of the SCN response.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

# order of the packed vector handed to the compiled kernel
PACKED_FIELDS = (
    "W_max", "S_max", "SCN_max", "tau_W", "tau_S", "tau_SCN",
    "alpha_W", "alpha_S", "alpha_SCN", "beta_W", "beta_SCN",
    "g_sw", "g_scnw", "g_ws", "g_scns",
    "h_max", "h_min", "tau_hw", "tau_hs", "k1", "k2", "theta_W", "k", "phi",
)


@dataclass(frozen=True)
class ParameterSet:
    W_max: float = 6.0
    S_max: float = 6.0
    SCN_max: float = 7.0
    tau_W: float = 0.1
    tau_S: float = 0.1
    tau_SCN: float = 0.05
    alpha_W: float = 0.5
    alpha_S: float = 0.175
    alpha_SCN: float = 0.7
    beta_W: float = -0.37
    beta_SCN: float = 0.0
    g_sw: float = 0.3
    g_scnw: float = 0.06
    g_ws: float = 0.28
    g_scns: float = 0.0825
    h_max: float = 323.88
    h_min: float = 0.0
    tau_hw: float = 15.78
    tau_hs: float = 3.37
    k1: float = -0.1
    k2: float = -0.006
    theta_W: float = 4.0
    k: float = 1.0
    phi: float = 0.0

    def __post_init__(self):
        for name in ("tau_W", "tau_S", "tau_SCN", "tau_hw", "tau_hs",
                     "W_max", "S_max", "SCN_max", "alpha_W", "alpha_S"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.h_min < self.h_max:
            raise ValueError("h_min must be below h_max")
        if not 0.0 < self.k <= 1.0:
            raise ValueError(f"k must lie in (0, 1], got {self.k}")
        if not 0.0 < self.alpha_SCN <= 3.0:
            raise ValueError(f"alpha_SCN must lie in (0, 3], got {self.alpha_SCN}")
        for f in fields(self):
            if not math.isfinite(getattr(self, f.name)):
                raise ValueError(f"{f.name} is not finite")

    @property
    def omega(self) -> float:
        return 2.0 * math.pi / 24.0

    def with_(self, **changes) -> "ParameterSet":
        return replace(self, **changes)

    def packed(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PACKED_FIELDS], dtype=np.float64)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ParameterSet":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown parameter keys: {sorted(unknown)}")
        return cls(**{key: float(val) for key, val in data.items()})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ParameterSet":
        return cls.from_dict(json.loads(text))


DEFAULT = ParameterSet()
