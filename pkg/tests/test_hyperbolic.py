import mpmath as mp
import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from lindthermo import hyperbolic as hyp

mp.mp.dps = 400  # coth - tanh cancels ~2y/ln(10) digits
args = st.floats(1e-9, 300.0)


def rel(a, b):
    return abs(a - float(b)) / abs(float(b))


@given(args)
def test_against_high_precision(y):
    Y = mp.mpf(y)
    assert rel(hyp.coth(y), mp.coth(Y)) < 1e-13
    assert rel(hyp.sech(y), mp.sech(Y)) < 1e-13
    assert rel(hyp.coth_minus_tanh(y), mp.coth(Y) - mp.tanh(Y)) < 1e-12
    assert rel(hyp.csch2(y), 1 / mp.sinh(Y) ** 2) < 1e-12
    assert rel(hyp.one_minus_sech(y), 1 - mp.sech(Y)) < 1e-12
    assert rel(hyp.d_ycoth(y), mp.coth(Y) - Y / mp.sinh(Y) ** 2) < 1e-12
    assert rel(hyp.log_sinh(y), mp.log(mp.sinh(Y))) < 1e-12


def test_no_overflow_far_out():
    with np.errstate(over="raise", divide="raise", invalid="raise"):
        vals = [hyp.sech(1e5), hyp.coth(1e5), hyp.csch2(1e5), hyp.log_sinh(1e5), hyp.shc(0.0)]
    assert all(np.isfinite(vals))
    assert hyp.shc(0.0) == 1.0
