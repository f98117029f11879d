"""Generalized Brunovsky states y_[kappa-1] built from the triangular output
chain, their v-form (ubar1-jets renamed to new-input jets) and the two
regularity certificates."""

from __future__ import annotations

from dataclasses import dataclass

from . import symexpr as sx
from .flatsys import ControlSystem, FlatSpec, MultiIndex, output_jet_deriver
from .linearize import TransformedChain


@dataclass
class BrunovskyState:
    kappa: MultiIndex
    R: MultiIndex
    lead: int
    labels: list       # (j, a) for each component y^j_a
    components: list   # expressions in (x, ubar1-jets)
    v_form: list       # same with ubar1_a -> v^lead_a
    states: tuple
    chain: TransformedChain

    @property
    def n(self) -> int:
        return len(self.components)

    def component(self, j: int, a: int, v: bool = True):
        return (self.v_form if v else self.components)[self.labels.index((j, a))]

    def channel(self, j: int, v: bool = True) -> list:
        return [self.component(j, a, v) for a in range(self.kappa[j - 1])]


def kappa_for(K, R, lead: int = 1) -> MultiIndex:
    """(k1, r2) for the primary variant, (r1, k2) for the alternate."""
    return MultiIndex(K[0], R[1]) if lead == 1 else MultiIndex(R[0], K[1])


def build_brunovsky(chain: TransformedChain) -> BrunovskyState:
    lead = chain.lead
    kappa = kappa_for(chain.K, chain.R, lead)
    labels, comps = [], []
    for j in (1, 2):
        for a in range(kappa[j - 1]):
            labels.append((j, a))
            comps.append(chain.rows[j - 1][a])
    ubars = sorted(v for v in sx.free_vars_all(comps) if v.kind == sx.UBAR)
    binds = {v: sx.var(sx.NewInputJet(lead, v.order)) for v in ubars if v.index == 1}
    v_form = [sx.substitute(c, binds) for c in comps]
    return BrunovskyState(kappa, chain.R, lead, labels, comps, v_form,
                          tuple(chain.sysbar.states), chain)


def state_jacobian(b: BrunovskyState):
    return sx.jacobian(b.components, list(b.states))


def check_state_transformation(b: BrunovskyState, samples: int = 10, rng=None) -> bool:
    """The components form a regular change of the state x."""
    dom = b.chain.sysbar.sampler()
    return sx.numeric_rank(state_jacobian(b), dom, samples, rng=rng) == len(b.states)


def brunovsky_columns(kappa) -> list:
    return [sx.OutputJet(j, a) for j in (1, 2) for a in range(kappa[j - 1])]


def check_Fx_rank(sys: ControlSystem, spec: FlatSpec, kappa, samples: int = 10, rng=None) -> bool:
    """d F_x / d y_[kappa-1] is regular at output jets of sampled trajectories."""
    if spec.Fx is None:
        raise ValueError("no parameterization supplied")
    cols = brunovsky_columns(kappa)
    if len(cols) != len(spec.Fx):
        return False
    dom = sys.sampler(output_jet_deriver(sys, spec.phi))
    return sx.numeric_rank(sx.jacobian(list(spec.Fx), cols), dom, samples, rng=rng) == len(cols)
