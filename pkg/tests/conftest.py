from functools import lru_cache
from pathlib import Path

import numpy as np

import pytest

import flatforge.symexpr as sx
from flatforge.flatsys import output_jet_deriver

from flatforge.pipeline import design
from flatforge.sysfile import load_system

CORPUS = Path(__file__).resolve().parents[1] / "src" / "flatforge" / "corpus"
NAMES = ("vehicle", "academic", "vtol")


@lru_cache(maxsize=None)
def corpus_doc(name):
    return load_system(CORPUS / f"{name}.fsys", rng=0)


@lru_cache(maxsize=None)
def corpus_design(name, lead=1):
    return design(corpus_doc(name), lead, rng=0)


@pytest.fixture(params=NAMES)
def name(request):
    return request.param


@pytest.fixture(params=(1, 2), ids=("primary", "alt"))
def lead(request):
    return request.param


def corpus_expression_cases():
    """(label, expressions, sampler) for every expression family of the corpus."""
    cases = []
    for name in NAMES:
        doc = corpus_doc(name)
        sys_, spec = doc.sys, doc.spec
        cases.append((f"{name}/dynamics", list(sys_.f), sys_.sampler()))
        cases.append((f"{name}/flat output", list(spec.phi), sys_.sampler()))
        if spec.Fx is not None:
            fs = list(spec.Fx) + list(spec.Fu)
            cases.append((f"{name}/parameterization", fs, sys_.sampler(output_jet_deriver(sys_, spec.phi))))
        chain = corpus_design(name).chain
        cases.append((f"{name}/transformed chain", chain.flat(), chain.sysbar.sampler()))
    return cases


def central_difference(e, v, point, h):
    hi, lo = dict(point), dict(point)
    hi[v] += h
    lo[v] -= h
    return (sx.evaluate(e, hi) - sx.evaluate(e, lo)) / (2 * h)


def fd_worst(exprs, sampler, points=100, h=1e-6, seed=11):
    """Largest |d_sym - d_fd| / max(1, |d_sym|) over sampled points and variables."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for e in exprs:
        vs = sorted(v for v in e.free if v.kind != sx.PARAM)
        ds = [sx.differentiate(e, v) for v in vs]
        for _ in range(points if vs else 0):
            point = sampler.sample(rng, e.free)
            for v, d in zip(vs, ds):
                sym = sx.evaluate(d, point)
                worst = max(worst, abs(sym - central_difference(e, v, point, h)) / max(1.0, abs(sym)))
    return worst
