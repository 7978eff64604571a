"""Task-throughput scheduling of multi-server queues with belief states.

Modules: ``chain`` (queue models, beliefs), ``policies`` (myopic and
round-robin), ``exact_dp`` (optimality oracle), ``rsab_whittle`` (one-arm
subsidy problem and Whittle index), ``relaxed_bound`` (LP upper bound),
``montecarlo`` (simulator) and ``cli``.
"""
__version__ = "0.1.0"
