"""m(delta) profiles for a contracting IFS, the sparse two-point system and the identity.

    python scripts/profile_sa.py
"""

from nonstat_rds.experiments import profile_standing_assumption
from nonstat_rds.measures import Interval
from nonstat_rds.models import Constant, TwoPointSparse, cantor_ifs, identity_distribution

deltas = [0.5, 0.1, 0.01, 0.001]
cases = {
    "cantor": (Constant(cantor_ifs(0.5)), [1, 10, 100]),
    "two_point_sparse": (TwoPointSparse.sparse(4), [1, 10, 100]),
    "identity": (Constant(identity_distribution(Interval(0.0, 1.0))), [1]),
}
for name, (seq, probes) in cases.items():
    rep = profile_standing_assumption(seq, deltas, probes, m_cap=32)
    print(name, rep.verdict)
    for row in rep.tables["m_of_delta"]:
        print("   ", row)
