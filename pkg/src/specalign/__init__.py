"""Graph-spectral alignment for domain adaptation at desk scale.

Library layout:
  autodiff   reverse-mode tape on float64 numpy arrays
  linalg     Jacobi symmetric eigendecomposition, eigenvalue adjoint, solver
  graph      dynamic batch graphs: similarity, k-NN sparsification, Laplacians
  spectral   spectra, spectral distance, alignment penalties
  bank       target memory bank with sharpening and EMA updates
  propagate  neighbor-aware propagation losses and the LPA oracle
  model      extractor/classifier/discriminator, losses, SGD
  augment    feature jitter, ramp-up schedule, consistency loss
  data       synthetic shift generators, scenarios, CSV I/O
  metrics    accuracy and the proxy A-distance
  trainer    the full training loop and reporting
  report     JSONL/CSV/figure outputs
  verify     property suites behind `specalign verify`
"""

__version__ = "0.1.0"
