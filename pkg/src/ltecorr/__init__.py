"""Unsupervised point-cloud correspondence via locally linear embedding
transforms.

Pipeline: a small edge-convolution network embeds each cloud, neighborhood
reconstruction weights are solved in the embedding space, those weights
rebuild one cloud from the other, and a kernel density divergence between
the rebuilt and the real cloud drives training.  Correspondence is then
nearest neighbor matching between embeddings.

Submodules are imported lazily so that lightweight entry points can
configure process state (thread caps) before numpy loads.
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "tensor",
    "pointcloud",
    "neighbors",
    "lle",
    "embed_net",
    "reconstruct",
    "losses",
    "trainer",
    "correspond",
    "cli",
)

__all__ = list(_SUBMODULES) + ["__version__"]


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib

        module = importlib.import_module(f".{name}", __name__)
        globals()[name] = module
        return module
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(__all__)
