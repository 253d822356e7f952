"""Hypothesis strategies for measures and maps."""

import math

import numpy as np
from hypothesis import strategies as st

from nonstat_rds.measures import Circle, DiscreteMeasure, Interval, ProjectiveLine
from nonstat_rds.models import Mat2

UNIT = Interval(0.0, 1.0)
RP1 = ProjectiveLine()
CIRCLE = Circle()


@st.composite
def measures(draw, space=UNIT, max_atoms=5):
    k = draw(st.integers(1, max_atoms))
    if isinstance(space, Interval):
        pts = draw(st.lists(st.floats(space.lo, space.hi, allow_nan=False), min_size=k, max_size=k))
    else:
        hi = math.nextafter(space.period, 0.0)
        pts = draw(st.lists(st.floats(0.0, hi, allow_nan=False), min_size=k, max_size=k))
    w = draw(st.lists(st.floats(0.01, 1.0), min_size=k, max_size=k))
    return DiscreteMeasure.from_unnormalized(space, pts, w)


@st.composite
def sl2(draw, max_log=1.0):
    """Random SL(2,R) element ``R(t1) diag(e^s, e^-s) R(t2)``."""
    t1 = draw(st.floats(0, math.pi))
    t2 = draw(st.floats(0, math.pi))
    s = draw(st.floats(-max_log, max_log))
    m = Mat2.rotation(t1).array @ np.diag([math.exp(s), math.exp(-s)]) @ Mat2.rotation(t2).array
    return Mat2.from_array(m)
