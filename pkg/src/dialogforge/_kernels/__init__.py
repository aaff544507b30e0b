"""Hot-loop kernels: compiled extension when built, numpy fallback otherwise."""

try:
    from ._greedy import greedy_cluster

    KERNEL_BACKEND = "cython"
except ImportError:
    from .fallback import greedy_cluster

    KERNEL_BACKEND = "python"


def available_backends() -> dict:
    """Importable kernel implementations, for parity tests and benchmarks."""
    from . import fallback

    backends = {"python": fallback.greedy_cluster}
    try:
        from . import _greedy

        backends["cython"] = _greedy.greedy_cluster
    except ImportError:
        pass
    return backends


__all__ = ["greedy_cluster", "KERNEL_BACKEND", "available_backends"]
