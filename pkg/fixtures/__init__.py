from fixtures.loader import (
    available_fixtures,
    fixture_jacobian,
    fixture_network,
    gated_expectations,
    load_fixture,
    random_fixture,
)

__all__ = [
    "available_fixtures",
    "fixture_jacobian",
    "fixture_network",
    "gated_expectations",
    "load_fixture",
    "random_fixture",
]
