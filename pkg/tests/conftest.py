import pytest

from cmag.core import ClaimType, Policy, Targeting, Theme, Timing


@pytest.fixture
def make_policy():
    def _make(theme="moral", claim="factual", intensity=0.6, targeting="random", timing="sustained"):
        return Policy.honest(Theme(theme), ClaimType(claim), intensity, Targeting(targeting), Timing(timing))

    return _make
