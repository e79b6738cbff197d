"""Cross-preset regression: the identity catalogue on the cubic preset.

The quartic-drift preset runs in three space dimensions with a deeper noise
regularity, polynomial arity caps and additive noise, so it exercises the
multi-index handling and the arity-driven vanishing on a genuinely different
rule.  Sizes are kept small; the heavy-cap combinations are covered for the
default preset by the acceptance module.
"""

import pytest

from flowtrees.verify import run_identity

FAST = [
    ("duality", {"max_edges": 3, "samples": 10}),
    ("flow", {"max_edges": 4, "samples": 10}),
    ("drmu", {"max_edges": 3, "samples": 5}),
    ("combidmu", {"max_edges": 4, "samples": 10}),
    ("upsilon_d", {"max_edges": 2, "samples": 5}),
    ("upsilon_delta", {"max_edges": 3, "samples": 5}),
    ("commutation", {"max_edges": 2, "samples": 2}),
    ("graft", {"max_edges": 2, "samples": 6}),
    ("flowcoeff", {"max_edges": 2, "samples": 2}),
    ("lemmagraft", {"max_edges": 2, "samples": 3}),
    ("coherence", {}),
    ("renorm_eq", {}),
    ("bphz_triangular", {}),
]


@pytest.mark.parametrize("name,kw", FAST, ids=[n for n, _ in FAST])
def test_identity_on_quartic_preset(name, kw, phi4):
    rep = run_identity(name, phi4, **kw)
    assert rep.status == "PASS", rep.failures[:3]
    assert rep.checked > 0
