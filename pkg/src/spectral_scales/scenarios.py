"""Preset two-scale potentials used throughout the tests and the CLI."""
from __future__ import annotations

from dataclasses import dataclass

from .potentials import (
    CompositePotential,
    DecayParams,
    PotentialSpec,
    gaussian,
    lorentzian_sq,
    rational_quartic,
    sech,
    sech2,
)

__all__ = ["Scenario", "SCENARIOS", "get_scenario", "AUDIT_DECAY"]

# constants for the advisory decay audit of the presets
AUDIT_DECAY = DecayParams(C0=100.0, C1=100.0, gamma=1.0)


@dataclass(frozen=True)
class Scenario:
    """Near-field ``v0``, far-field ``v1`` and the counts they are known to produce.

    ``expected`` holds ``(m(V0), m(V1), m(W))`` as published for ``eps = 0.1``.
    """

    id: int
    name: str
    v0: PotentialSpec
    v1: PotentialSpec
    expected: tuple[int, int, int]

    def composite(self, epsilon: float) -> CompositePotential:
        return CompositePotential(self.v0, self.v1, epsilon)


def _audited(spec: PotentialSpec) -> PotentialSpec:
    return PotentialSpec(spec.form, spec.a, spec.b, spec.terms, AUDIT_DECAY)


SCENARIOS: dict[int, Scenario] = {
    1: Scenario(1, "gaussian wells", _audited(gaussian(-2.8)), _audited(gaussian(-30.0)), (1, 2, 3)),
    2: Scenario(2, "rational well, sech well", _audited(rational_quartic(-2.6, 2.0)), _audited(sech(-20.0)), (1, 3, 4)),
    3: Scenario(3, "sech^2 well, lorentzian-squared well", _audited(sech2(-3.0, 1.2)), _audited(lorentzian_sq(-30.0)), (1, 2, 3)),
}


def get_scenario(scenario_id: int) -> Scenario:
    try:
        return SCENARIOS[int(scenario_id)]
    except (KeyError, ValueError):
        raise ValueError(f"unknown scenario {scenario_id!r}; expected one of {sorted(SCENARIOS)}") from None
