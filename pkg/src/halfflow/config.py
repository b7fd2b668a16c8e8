"""Flat key-value experiment configuration.

Config files are line oriented: ``key = value`` with dotted keys, ``#``
comments and blank lines.  The format is deliberately trivial to parse and
diff-friendly; the full resolved mapping is echoed into every run manifest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

from .flow import FlowFormulation, SolverOptions
from .manifolds import EmbeddedCircle, Manifold, Sphere, ellipsoid, torus

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "parse_config_text",
    "load_config",
    "build_manifold",
    "scenario_names",
    "scenario_text",
]


class ConfigError(Exception):
    """Invalid or missing configuration entry; carries the field name."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"config field '{key}': {message}")


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines into an ordered string mapping."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}", "empty key")
        if key in out:
            raise ConfigError(key, "duplicate entry")
        out[key] = value
    return out


def _get(raw: dict, key: str, default=None, required=False):
    if key in raw:
        return raw[key]
    if required:
        raise ConfigError(key, "required entry is missing")
    return default


def _as_int(raw, key, default=None, required=False):
    v = _get(raw, key, default, required)
    if v is None or isinstance(v, int):
        return v
    try:
        return int(v)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {v!r}") from None


def _as_float(raw, key, default=None, required=False):
    v = _get(raw, key, default, required)
    if v is None or isinstance(v, float):
        return v
    try:
        return float(v)
    except ValueError:
        raise ConfigError(key, f"expected a number, got {v!r}") from None


def _as_bool(raw, key, default=None):
    v = _get(raw, key, default)
    if v is None or isinstance(v, bool):
        return v
    low = v.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ConfigError(key, f"expected a boolean, got {v!r}")


def _as_float_list(raw, key, default=()):
    v = _get(raw, key)
    if v is None:
        return tuple(default)
    try:
        return tuple(float(t) for t in v.split(",") if t.strip())
    except ValueError:
        raise ConfigError(key, f"expected comma-separated numbers, got {v!r}") from None


@dataclass
class ExperimentConfig:
    """Fully validated experiment description."""

    M: int
    manifold_variant: str
    manifold_params: dict
    formulation: FlowFormulation
    solver: SolverOptions
    initial: dict
    diagnostics_stride: int
    radii: tuple
    output_dir: str
    snapshot_times: tuple = ()
    gap_formulations: tuple = ()
    calibration_file: str | None = None
    raw: dict = field(default_factory=dict)


_GENERATORS = {
    "projected_perturbation",
    "great_circle",
    "torus_loop",
    "concentrated_bump",
}


def load_config(text: str) -> ExperimentConfig:
    """Parse and validate a config; raises :class:`ConfigError` on problems."""
    raw = parse_config_text(text)

    M = _as_int(raw, "grid.M", required=True)
    if M is None or M % 2 != 0 or M < 8:
        raise ConfigError("grid.M", f"node count must be even and >= 8, got {M}")

    variant = _get(raw, "manifold.variant", required=True)
    params: dict = {}
    if variant == "sphere":
        params["ambient_dim"] = _as_int(raw, "manifold.ambient_dim", default=3)
    elif variant == "ellipsoid":
        axes = _as_float_list(raw, "manifold.semi_axes", default=(1.0, 1.0, 1.5))
        if len(axes) < 2 or any(a <= 0 for a in axes):
            raise ConfigError("manifold.semi_axes", f"invalid semi-axes {axes}")
        params["semi_axes"] = axes
    elif variant == "torus":
        params["major_radius"] = _as_float(raw, "manifold.major_radius", default=2.0)
        params["minor_radius"] = _as_float(raw, "manifold.minor_radius", default=0.5)
    elif variant == "embedded_circle":
        pass
    else:
        raise ConfigError("manifold.variant", f"unknown variant {variant!r}")

    form_tag = _get(raw, "formulation", default="projection")
    try:
        formulation = FlowFormulation(form_tag)
    except ValueError:
        raise ConfigError("formulation", f"unknown formulation {form_tag!r}") from None

    scheme = _get(raw, "solver.scheme", default="imex_euler")
    try:
        solver = SolverOptions(
            dt=_as_float(raw, "solver.dt", required=True),
            scheme=scheme,
            reproject=_as_bool(raw, "solver.reproject", default=False),
            t_end=_as_float(raw, "solver.t_end", required=True),
            constraint_abort_threshold=_as_float(
                raw, "solver.constraint_abort_threshold", default=1e-2
            ),
            chord_order=_as_int(raw, "solver.chord_order", default=16),
        )
    except ValueError as exc:
        raise ConfigError("solver", str(exc)) from None

    generator = _get(raw, "initial.generator", required=True)
    if generator not in _GENERATORS:
        raise ConfigError("initial.generator", f"unknown generator {generator!r}")
    initial = {"generator": generator}
    if generator in ("projected_perturbation", "concentrated_bump"):
        seed = _as_int(raw, "initial.seed")
        if seed is None:
            raise ConfigError(
                "initial.seed", "randomized generators require an explicit seed"
            )
        initial["seed"] = seed
        base = _as_float_list(raw, "initial.base_point", default=())
        if base:
            initial["base_point"] = base
    if generator == "projected_perturbation":
        initial["epsilon"] = _as_float(raw, "initial.epsilon", default=0.1)
    if generator == "concentrated_bump":
        initial["concentration"] = _as_float(raw, "initial.concentration", default=300.0)
        initial["amplitude"] = _as_float(raw, "initial.amplitude", default=0.8)
    if generator == "great_circle":
        initial["wavenumber"] = _as_int(raw, "initial.wavenumber", default=1)
    if generator == "torus_loop":
        for k, d in (
            ("theta_winding", 0),
            ("phi_winding", 0),
        ):
            initial[k] = _as_int(raw, f"initial.{k}", default=d)
        for k, d in (
            ("theta_amplitude", 0.3),
            ("phi_amplitude", 0.4),
            ("phi_offset", 0.2),
        ):
            initial[k] = _as_float(raw, f"initial.{k}", default=d)

    stride = _as_int(raw, "diagnostics.stride", default=1)
    if stride < 1:
        raise ConfigError("diagnostics.stride", f"stride must be >= 1, got {stride}")

    gaps = []
    gap_tags = _get(raw, "diagnostics.formulation_gaps", default="")
    for tag in (t.strip() for t in gap_tags.split(",") if t.strip()):
        try:
            gaps.append(FlowFormulation(tag))
        except ValueError:
            raise ConfigError(
                "diagnostics.formulation_gaps", f"unknown formulation {tag!r}"
            ) from None

    known_prefixes = (
        "grid.",
        "manifold.",
        "solver.",
        "initial.",
        "diagnostics.",
        "output.",
        "snapshot.",
        "calibration.",
    )
    for key in raw:
        if key != "formulation" and not key.startswith(known_prefixes):
            raise ConfigError(key, "unknown configuration entry")

    return ExperimentConfig(
        M=M,
        manifold_variant=variant,
        manifold_params=params,
        formulation=formulation,
        solver=solver,
        initial=initial,
        diagnostics_stride=stride,
        radii=_as_float_list(raw, "diagnostics.R_list", default=()),
        output_dir=_get(raw, "output.dir", default="runs/out"),
        snapshot_times=_as_float_list(raw, "snapshot.times", default=()),
        gap_formulations=tuple(gaps),
        calibration_file=_get(raw, "calibration.file"),
        raw=raw,
    )


def build_manifold(cfg: ExperimentConfig) -> Manifold:
    """Instantiate the configured target manifold."""
    if cfg.manifold_variant == "sphere":
        return Sphere(cfg.manifold_params["ambient_dim"])
    if cfg.manifold_variant == "ellipsoid":
        return ellipsoid(cfg.manifold_params["semi_axes"])
    if cfg.manifold_variant == "torus":
        return torus(
            cfg.manifold_params["major_radius"], cfg.manifold_params["minor_radius"]
        )
    if cfg.manifold_variant == "embedded_circle":
        return EmbeddedCircle()
    raise ConfigError("manifold.variant", f"unknown variant {cfg.manifold_variant!r}")


def scenario_names() -> list[str]:
    """Names of the scenario configs shipped with the package."""
    pkg = resources.files("halfflow") / "scenarios"
    return sorted(p.name[: -len(".cfg")] for p in pkg.iterdir() if p.name.endswith(".cfg"))


def scenario_text(name: str) -> str:
    """Raw text of a shipped scenario config."""
    path = resources.files("halfflow") / "scenarios" / f"{name}.cfg"
    if not path.is_file():
        raise ConfigError("scenario", f"no shipped scenario named {name!r}")
    return path.read_text()
