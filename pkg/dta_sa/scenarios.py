"""Built-in simulation scenarios (all with marginal selection probability about 0.7)."""

import json
import math
import tomllib
from dataclasses import dataclass, replace
from pathlib import Path

from dta_sa.errors import InputError, UnknownScenario
from dta_sa.reitsma import BivariateParams, sauc
from dta_sa.selection import DOR_CONTRAST, SENSITIVITY_CONTRAST, SPECIFICITY_CONTRAST, ContrastVector

VARIANTS = {"dor": DOR_CONTRAST, "se": SENSITIVITY_CONTRAST, "sp": SPECIFICITY_CONTRAST}

# contrast used by the "misspecified" proposed fit for each true variant
MISSPECIFIED_C1 = {"dor": 1.0, "se": 0.0, "sp": 1.0}

DEFAULT_S = 200
BETA = 0.5
SMALL_TAU = math.sqrt(0.5)

# id: (sauc, mu1, mu2, tau1, tau2, tau12, rho, alpha for c1=c2, alpha for c1=1, alpha for c1=0)
SCENARIO_TABLE = {
    1: (0.564, 0.000, 1.735, 1.0, 2.0, -0.6, -0.3, -0.165, 0.891, -0.429),
    2: (0.620, 0.000, 1.735, 1.0, 2.0, -1.2, -0.6, -0.251, 0.894, -0.433),
    3: (0.828, 1.386, 1.386, 1.0, 2.0, -0.6, -0.3, -0.766, -0.570, -0.111),
    4: (0.846, 1.386, 1.386, 1.0, 2.0, -1.2, -0.6, -0.848, -0.573, -0.118),
    5: (0.892, 2.197, -0.405, 1.0, 2.0, -0.6, -0.3, -0.198, -1.269, 1.744),
    6: (0.877, 2.197, -0.405, 1.0, 2.0, -1.2, -0.6, -0.284, -1.269, 1.733),
    7: (0.620, 0.000, 1.735, SMALL_TAU, SMALL_TAU, -0.15, -0.3, -0.423, 0.794, -0.993),
    8: (0.702, 0.000, 1.735, SMALL_TAU, SMALL_TAU, -0.30, -0.6, -0.461, 0.795, -0.996),
    9: (0.846, 1.386, 1.386, SMALL_TAU, SMALL_TAU, -0.15, -0.3, -1.003, -0.698, -0.697),
    10: (0.864, 1.386, 1.386, SMALL_TAU, SMALL_TAU, -0.30, -0.6, -1.032, -0.701, -0.698),
    11: (0.877, 2.197, -0.405, SMALL_TAU, SMALL_TAU, -0.15, -0.3, -0.457, -1.362, 1.342),
    12: (0.835, 2.197, -0.405, SMALL_TAU, SMALL_TAU, -0.30, -0.6, -0.492, -1.362, 1.335),
}


@dataclass(frozen=True)
class Scenario:
    id: int
    mu1: float
    mu2: float
    tau1: float
    tau2: float
    tau12: float
    rho: float
    beta: float
    alpha: float
    contrast: ContrastVector
    S: int = DEFAULT_S
    sauc_true: float = math.nan
    variant: str = "dor"

    def __post_init__(self):
        if not math.isclose(self.tau12, self.rho * self.tau1 * self.tau2, rel_tol=1e-12, abs_tol=1e-12):
            raise InputError(f"❌ Scenario {self.id}: tau12 {self.tau12} != rho * tau1 * tau2")
        if self.S < 1:
            raise InputError(f"❌ Scenario {self.id}: population size S must be >= 1")

    @property
    def biv(self):
        return BivariateParams(self.mu1, self.mu2, self.tau1, self.tau2, self.rho)

    def with_size(self, S):
        return replace(self, S=int(S))

    def with_alpha(self, alpha):
        return replace(self, alpha=float(alpha))


def get_scenario(scenario_id: int, variant: str = "dor", S: int = DEFAULT_S) -> Scenario:
    if variant not in VARIANTS:
        raise UnknownScenario(f"❌ Unknown contrast variant {variant!r}; choose from {', '.join(VARIANTS)}")
    if scenario_id not in SCENARIO_TABLE:
        raise UnknownScenario(f"❌ Unknown scenario {scenario_id}; catalog: {catalog_listing()}")
    sauc_true, mu1, mu2, tau1, tau2, tau12, rho, *alphas = SCENARIO_TABLE[scenario_id]
    alpha = dict(zip(VARIANTS, alphas))[variant]
    return Scenario(
        id=scenario_id,
        mu1=mu1,
        mu2=mu2,
        tau1=tau1,
        tau2=tau2,
        tau12=tau12,
        rho=rho,
        beta=BETA,
        alpha=alpha,
        contrast=VARIANTS[variant],
        S=S,
        sauc_true=sauc_true,
        variant=variant,
    )


def all_scenarios(S: int = DEFAULT_S) -> list:
    return [get_scenario(i, v, S) for i in SCENARIO_TABLE for v in VARIANTS]


def catalog_listing() -> str:
    return ", ".join(
        f"{i} (mu=({row[1]}, {row[2]}), rho={row[6]}, SAUC={row[0]})" for i, row in SCENARIO_TABLE.items()
    )


def load_scenario_file(path) -> Scenario:
    """Scenario from a TOML or JSON file carrying the Scenario fields.

    ``contrast`` may be a variant name (dor/se/sp) or a c1 value;
    ``tau12`` defaults to rho * tau1 * tau2.
    """
    path = Path(path)
    try:
        if path.suffix.lower() == ".toml":
            with path.open("rb") as handle:
                raw = tomllib.load(handle)
        else:
            with path.open(encoding="utf-8") as handle:
                raw = json.load(handle)
    except FileNotFoundError:
        raise InputError(f"❌ Scenario file not found: {path}")
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise InputError(f"❌ Could not parse scenario file {path}: {e}")

    try:
        contrast_raw = raw.get("contrast", "dor")
        if isinstance(contrast_raw, str):
            if contrast_raw not in VARIANTS:
                raise UnknownScenario(f"❌ Unknown contrast {contrast_raw!r} in {path}")
            variant, contrast = contrast_raw, VARIANTS[contrast_raw]
        else:
            variant, contrast = "custom", ContrastVector.from_c1(float(contrast_raw))
        tau1, tau2, rho = float(raw["tau1"]), float(raw["tau2"]), float(raw["rho"])
        scenario = Scenario(
            id=int(raw.get("id", 0)),
            mu1=float(raw["mu1"]),
            mu2=float(raw["mu2"]),
            tau1=tau1,
            tau2=tau2,
            tau12=float(raw.get("tau12", rho * tau1 * tau2)),
            rho=rho,
            beta=float(raw["beta"]),
            alpha=float(raw["alpha"]),
            contrast=contrast,
            S=int(raw.get("S", DEFAULT_S)),
            variant=variant,
        )
    except KeyError as e:
        raise InputError(f"❌ Scenario file {path} is missing field {e}")

    return replace(scenario, sauc_true=float(raw.get("sauc_true", sauc(scenario.biv))))
