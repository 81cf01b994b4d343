"""Problem instances: users, edge resources, channel and timing parameters.

A :class:`Scenario` is one decision round: a set of users that sent
offloading requests during the interval, the edge server configuration,
and the parameters of the accuracy curve. Scenarios are plain values;
generation and (de)serialization are deterministic given a seed.

Units are SI throughout: seconds, bits, Hz. The request timeline is
discretized into ``slots_per_interval`` slots of ``slot_duration`` seconds
each, so the response waiting time of a user requesting at slot k is
``(K - k) * slot_duration`` seconds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ValidationError(ValueError):
    """Raised when a config or scenario field violates its invariant."""


def _require(cond: bool, field_name: str, message: str) -> None:
    if not cond:
        raise ValidationError(f"{field_name}: {message}")


@dataclass(frozen=True)
class DeviceProfile:
    """Per-step compute latency model of one GPU class: latency(b) = slope*b + intercept."""

    name: str
    step_slope: float   # seconds per unit of batch size
    step_intercept: float  # seconds, fixed cost per denoising step

    def __post_init__(self):
        _require(self.step_slope >= 0, "step_slope", f"must be >= 0, got {self.step_slope}")
        _require(self.step_intercept > 0, "step_intercept", f"must be > 0, got {self.step_intercept}")


@dataclass(frozen=True)
class UserRequest:
    id: int
    device: DeviceProfile
    alpha: float            # emphasis weight between accuracy term and latency
    request_slot: int       # slot index in [1, K] at which the request was sent
    prompt_bits: float      # uplink payload size
    intermediate_bits: float  # downlink payload size (intermediate noisy latent)
    alpha_clamped: bool = False  # set by the generator when the alpha band was degenerate

    def __post_init__(self):
        _require(self.alpha > 0, "alpha", f"must be > 0, got {self.alpha}")
        _require(self.prompt_bits > 0, "prompt_bits", f"must be > 0, got {self.prompt_bits}")
        _require(self.intermediate_bits > 0, "intermediate_bits",
                 f"must be > 0, got {self.intermediate_bits}")
        _require(self.request_slot >= 1, "request_slot",
                 f"must be >= 1, got {self.request_slot}")


@dataclass(frozen=True)
class EdgeConfig:
    gpus: int
    device: DeviceProfile
    b_max: int                  # concurrent-user limit per decision round
    slots_per_interval: int     # K
    slot_duration: float        # seconds per slot
    bandwidth_hz: float         # reserved maximum bandwidth W_max
    spectral_efficiency: float  # bits/s/Hz

    def __post_init__(self):
        _require(self.gpus >= 1, "gpus", f"must be >= 1, got {self.gpus}")
        _require(self.b_max >= 0, "b_max", f"must be >= 0, got {self.b_max}")
        _require(self.slots_per_interval >= 1, "slots_per_interval",
                 f"must be >= 1, got {self.slots_per_interval}")
        _require(self.slot_duration > 0, "slot_duration", f"must be > 0, got {self.slot_duration}")
        _require(self.bandwidth_hz > 0, "bandwidth_hz", f"must be > 0, got {self.bandwidth_hz}")
        _require(self.spectral_efficiency > 0, "spectral_efficiency",
                 f"must be > 0, got {self.spectral_efficiency}")


@dataclass(frozen=True)
class PaiParams:
    """Parameters of the accuracy-vs-split-point curve and its building blocks.

    The fitted curve is the logistic ``F(n) = 1 / (1 + exp(-a_f * (n - b_f)))``
    mapping the split point n (number of locally executed steps) to the
    personalized accuracy score. ``kappa_pai``, ``sigma_a`` and ``sigma_b``
    belong to the raw composite score over externally measured CLIP/LPIPS
    values; the fitted curve is what the optimization consumes.
    """

    n_total: int = 200   # N: total denoising steps
    n_min: int = 80      # minimum locally executed steps
    a_f: float = 0.0413  # logistic slope (1/steps)
    b_f: float = 71.44   # logistic midpoint (steps)
    kappa_pai: float = 3.0
    sigma_a: float = 30.0
    sigma_b: float = 0.1

    def __post_init__(self):
        _require(0 < self.n_min < self.n_total, "n_min",
                 f"need 0 < n_min < n_total, got {self.n_min}, {self.n_total}")
        _require(self.a_f > 0, "a_f", f"must be > 0, got {self.a_f}")
        # The curve is increasing, so F > 0.5 on the whole domain iff it holds
        # at the left endpoint. The split-point problem is only concave under
        # this condition.
        f_min = 1.0 / (1.0 + math.exp(-self.a_f * (self.n_min - self.b_f)))
        _require(f_min > 0.5, "b_f",
                 f"fitted curve must exceed 0.5 on [n_min, n_total]; F({self.n_min}) = {f_min}")


@dataclass(frozen=True)
class Scenario:
    users: list[UserRequest]
    edge: EdgeConfig
    pai: PaiParams
    seed: int

    def __post_init__(self):
        ids = [u.id for u in self.users]
        _require(ids == list(range(len(self.users))), "users",
                 f"user ids must be contiguous from 0, got {ids}")
        k = self.edge.slots_per_interval
        for u in self.users:
            _require(u.request_slot <= k, "request_slot",
                     f"user {u.id}: request_slot {u.request_slot} > K = {k}")

    @property
    def user_count(self) -> int:
        return len(self.users)


# Default GPU catalog. The per-step constants are illustrative fits in the
# style of vendor batching curves, chosen so that the edge profile at batch 20
# on 8 GPUs is faster per step than every local profile. They are
# configuration, not measured ground truth.
EDGE_DEVICE = DeviceProfile("h100-nvl", step_slope=0.004, step_intercept=0.010)

DEFAULT_CATALOG: tuple[tuple[DeviceProfile, float], ...] = (
    (DeviceProfile("gtx-1080", step_slope=0.090, step_intercept=1.010), 1.0),
    (DeviceProfile("rtx-2060", step_slope=0.075, step_intercept=0.825), 1.0),
    (DeviceProfile("rtx-3060", step_slope=0.060, step_intercept=0.640), 1.0),
    (DeviceProfile("rtx-3080", step_slope=0.045, step_intercept=0.505), 1.0),
    (DeviceProfile("rtx-4070", step_slope=0.035, step_intercept=0.385), 1.0),
    (DeviceProfile("rtx-4090", step_slope=0.025, step_intercept=0.275), 1.0),
)

DEFAULT_PROMPT_BITS = 216.0
DEFAULT_INTERMEDIATE_BITS = 4.4e6


@dataclass(frozen=True)
class GeneratorConfig:
    """Sampling law for random scenarios.

    Each user draws a device from ``device_catalog`` (weighted), a request
    slot uniform on [1, K], and an emphasis weight alpha uniform on the
    trade-off band

        [ dl / (a_f * F(n_min) * (1 - F(n_min))),
          alpha_kappa * dl / (a_f * F(n_total) * (1 - F(n_total))) ]

    where ``dl`` is the gap between the device's local per-step latency and
    the edge per-step latency at the assumed batch ``alpha_bhat``. Inside
    this band the split-point problem has a genuine accuracy/latency
    trade-off; below it the user would only care about latency, above it
    only about accuracy.

    ``alpha_ref_gpus`` pins the GPU count used in the alpha band, so sweeps
    over the edge GPU count can hold the user population fixed. When unset,
    the edge config's own GPU count is used.
    """

    user_count: int
    device_catalog: tuple[tuple[DeviceProfile, float], ...] = DEFAULT_CATALOG
    alpha_bhat: int = 20
    alpha_kappa: float = 0.05
    alpha_ref_gpus: int | None = None
    alpha_floor_delta: float = 1e-3  # substitute latency gap when the band degenerates
    prompt_bits: float = DEFAULT_PROMPT_BITS
    intermediate_bits: float = DEFAULT_INTERMEDIATE_BITS

    def __post_init__(self):
        _require(self.user_count >= 1, "user_count", f"must be >= 1, got {self.user_count}")
        _require(len(self.device_catalog) > 0, "device_catalog", "must be non-empty")
        _require(0 < self.alpha_kappa <= 1, "alpha_kappa",
                 f"must be in (0, 1], got {self.alpha_kappa}")
        _require(self.alpha_bhat >= 1, "alpha_bhat", f"must be >= 1, got {self.alpha_bhat}")
        _require(self.alpha_floor_delta > 0, "alpha_floor_delta",
                 f"must be > 0, got {self.alpha_floor_delta}")
        for dev, w in self.device_catalog:
            _require(w > 0, "device_catalog", f"weight for {dev.name} must be > 0, got {w}")


def default_edge(gpus: int = 8, b_max: int = 16) -> EdgeConfig:
    return EdgeConfig(
        gpus=gpus,
        device=EDGE_DEVICE,
        b_max=b_max,
        slots_per_interval=100,
        slot_duration=0.01,
        bandwidth_hz=1e6,
        spectral_efficiency=10.0,
    )


def alpha_band(device: DeviceProfile, cfg: GeneratorConfig, edge: EdgeConfig,
                pai: PaiParams) -> tuple[float, float, bool]:
    """Alpha sampling interval for one device; third element flags the clamp path."""
    gpus = cfg.alpha_ref_gpus if cfg.alpha_ref_gpus is not None else edge.gpus
    local = device.step_slope + device.step_intercept
    at_edge = edge.device.step_slope * (cfg.alpha_bhat / gpus) + edge.device.step_intercept
    delta = local - at_edge

    def f(n):
        return 1.0 / (1.0 + math.exp(-pai.a_f * (n - pai.b_f)))

    lo_den = pai.a_f * f(pai.n_min) * (1.0 - f(pai.n_min))
    hi_den = pai.a_f * f(pai.n_total) * (1.0 - f(pai.n_total))
    if delta <= 0:
        # Local inference is already at least as fast as the edge at the
        # assumed batch; the trade-off band is empty. Fall back to the band's
        # lower edge computed with a small positive latency gap.
        return cfg.alpha_floor_delta / lo_den, cfg.alpha_floor_delta / lo_den, True
    lo = delta / lo_den
    hi = cfg.alpha_kappa * delta / hi_den
    _require(hi >= lo, "alpha_kappa",
             f"alpha band is empty for device {device.name}: [{lo}, {hi}]")
    return lo, hi, False


def generate_scenario(seed: int, cfg: GeneratorConfig, edge: EdgeConfig,
                      pai: PaiParams | None = None) -> Scenario:
    """Draw a scenario deterministically from (seed, cfg, edge, pai)."""
    pai = pai if pai is not None else PaiParams()
    rng = np.random.default_rng(seed)
    weights = np.array([w for _, w in cfg.device_catalog], dtype=float)
    weights = weights / weights.sum()
    users = []
    for i in range(cfg.user_count):
        dev_idx = int(rng.choice(len(cfg.device_catalog), p=weights))
        device = cfg.device_catalog[dev_idx][0]
        slot = int(rng.integers(1, edge.slots_per_interval + 1))
        lo, hi, clamped = alpha_band(device, cfg, edge, pai)
        alpha = lo if clamped else float(rng.uniform(lo, hi))
        users.append(UserRequest(
            id=i,
            device=device,
            alpha=alpha,
            request_slot=slot,
            prompt_bits=cfg.prompt_bits,
            intermediate_bits=cfg.intermediate_bits,
            alpha_clamped=clamped,
        ))
    return Scenario(users=users, edge=edge, pai=pai, seed=seed)


# ---------------------------------------------------------------------------
# JSON persistence. The on-disk layout mirrors the dataclasses:
# {"seed": ..., "edge": {...}, "pai": {...}, "users": [{...}, ...]}
# with all latencies in seconds, sizes in bits, bandwidth in Hz.
# ---------------------------------------------------------------------------

def _device_to_dict(d: DeviceProfile) -> dict:
    return {"name": d.name, "step_slope": d.step_slope, "step_intercept": d.step_intercept}


def _device_from_dict(obj: dict, where: str) -> DeviceProfile:
    try:
        return DeviceProfile(str(obj["name"]), float(obj["step_slope"]),
                             float(obj["step_intercept"]))
    except KeyError as e:
        raise ValidationError(f"{where}: missing device field {e.args[0]!r}") from e


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "seed": s.seed,
        "users": [
            {
                "id": u.id,
                "device": _device_to_dict(u.device),
                "alpha": u.alpha,
                "request_slot": u.request_slot,
                "prompt_bits": u.prompt_bits,
                "intermediate_bits": u.intermediate_bits,
                "alpha_clamped": u.alpha_clamped,
            }
            for u in s.users
        ],
        "edge": {
            "gpus": s.edge.gpus,
            "device": _device_to_dict(s.edge.device),
            "b_max": s.edge.b_max,
            "slots_per_interval": s.edge.slots_per_interval,
            "slot_duration": s.edge.slot_duration,
            "bandwidth_hz": s.edge.bandwidth_hz,
            "spectral_efficiency": s.edge.spectral_efficiency,
        },
        "pai": {
            "n_total": s.pai.n_total,
            "n_min": s.pai.n_min,
            "a_f": s.pai.a_f,
            "b_f": s.pai.b_f,
            "kappa_pai": s.pai.kappa_pai,
            "sigma_a": s.pai.sigma_a,
            "sigma_b": s.pai.sigma_b,
        },
    }


def scenario_from_dict(obj: dict) -> Scenario:
    try:
        edge_obj = obj["edge"]
        edge = EdgeConfig(
            gpus=int(edge_obj["gpus"]),
            device=_device_from_dict(edge_obj["device"], "edge.device"),
            b_max=int(edge_obj["b_max"]),
            slots_per_interval=int(edge_obj["slots_per_interval"]),
            slot_duration=float(edge_obj["slot_duration"]),
            bandwidth_hz=float(edge_obj["bandwidth_hz"]),
            spectral_efficiency=float(edge_obj["spectral_efficiency"]),
        )
        pai_obj = obj["pai"]
        pai = PaiParams(
            n_total=int(pai_obj["n_total"]),
            n_min=int(pai_obj["n_min"]),
            a_f=float(pai_obj["a_f"]),
            b_f=float(pai_obj["b_f"]),
            kappa_pai=float(pai_obj["kappa_pai"]),
            sigma_a=float(pai_obj["sigma_a"]),
            sigma_b=float(pai_obj["sigma_b"]),
        )
        users = [
            UserRequest(
                id=int(u["id"]),
                device=_device_from_dict(u["device"], f"users[{j}].device"),
                alpha=float(u["alpha"]),
                request_slot=int(u["request_slot"]),
                prompt_bits=float(u["prompt_bits"]),
                intermediate_bits=float(u["intermediate_bits"]),
                alpha_clamped=bool(u.get("alpha_clamped", False)),
            )
            for j, u in enumerate(obj["users"])
        ]
        return Scenario(users=users, edge=edge, pai=pai, seed=int(obj["seed"]))
    except KeyError as e:
        raise ValidationError(f"missing field {e.args[0]!r} in scenario file") from e


def save_scenario(s: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2) + "\n")


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: not valid JSON at line {e.lineno}: {e.msg}") from e
    return scenario_from_dict(obj)
