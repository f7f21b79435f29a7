"""Latent space roadmaps for visual action planning on synthetic block worlds.

Modules: ``worlds`` (combinatorial task worlds), ``synthgen`` (observations with
nuisance variation), ``nn`` (dense nets with manual backprop), ``encoders``
(latent mapping models), ``cluster`` (HDBSCAN), ``lsr`` (roadmap building and
planning), ``metrics`` and ``cli``.
"""

__version__ = "0.1.0"
