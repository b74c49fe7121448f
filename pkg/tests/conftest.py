import os

from hypothesis import HealthCheck, settings

settings.register_profile(
    "ci",
    derandomize=True,
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


def worker_threads() -> int:
    env = os.environ.get("IKRR_TEST_THREADS")
    if env:
        return max(1, int(env))
    return min(2, os.cpu_count() or 1)
