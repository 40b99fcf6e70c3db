"""Hand-built models with known outputs."""

from dataclasses import replace

import numpy as np

from clstm_rom import clstm
from clstm_rom import twostage as ts
from clstm_rom.dataset import Normalizer

TINY = ts.StageConfig(hidden=6, channels=4, epochs=3, batch_size=16, lr=3e-3)


def const_net(n_in, m, z):
    """Residual C-LSTM with zero weights: predicts its baseline exactly."""
    cfg = clstm.CLstmConfig(n_in=n_in, m=m, z=z, hidden=3, channels=2, residual=True)
    return clstm.CLstmModel.init(cfg, np.random.default_rng(0)).zeroed()


def rigged_model(k=1, w=4, m=2, z=2, p=1, lo=-3.0, hi=3.0):
    """Two-stage model whose rollout repeats the last window row forever."""
    experts = tuple(const_net(z + p, m, z) for _ in range(k))
    combiner = const_net(m * z + p, m, z)
    res = replace(TINY, residual=True)
    cfg = ts.TwoStageConfig(k=k, w=w, m=m, first=res, second=res)
    return ts.TwoStageModel(cfg, np.arange(1.0, k + 1.0)[:, None], experts, combiner,
                            Normalizer(np.full(z, lo), np.full(z, hi)),
                            Normalizer(np.zeros(p), np.full(p, float(k))))
