"""Shared pytest configuration: a deterministic, CI-friendly hypothesis profile."""

from hypothesis import HealthCheck, settings

settings.register_profile(
    "geoinv",
    max_examples=25,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("geoinv")
