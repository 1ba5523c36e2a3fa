"""Multi-way massive MIMO relay simulation with ZF processing and imperfect CSI."""

from .channel import (ChannelRealization, FadingProfile, InvalidConfig, NonPositiveBeta,
                      SystemConfig, drop_users, estimation_stats, sample_realization)
from .linalg import DimensionMismatch, RngStream, SingularGram, hermitian_solve, sample_circular_gaussian
from .oracles import OracleFailure, OracleResult
from .processing import (InvalidSlot, ProcessingSet, QTriple, alpha_analytic, alpha_mc, mr_precoder,
                         mr_receiver, permutation, q_terms_mc, relay_transmit, zf_precoder, zf_receiver)
from .se import NoiseDecomposition, SeReport, noise_decomposition_mc, se_closed_form, se_monte_carlo, sum_se

__version__ = "0.1.0"
