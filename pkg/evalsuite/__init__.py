# Metrics, perturbation benchmarks, certification, ablations
