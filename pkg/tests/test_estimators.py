import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from beliefmatch._engine import CheckArrays
from beliefmatch.channel import DepolarizingChannel, ShotSeed, sample_error_codes
from beliefmatch.estimators import (BeliefMatchingDecoder, MwpmDecoder,
                                    NeuralBeliefMatchingDecoder)


def _shots(d, n, m_std, eps, count, seed=0):
    from beliefmatch import build_toric

    code = build_toric(d)
    ar = CheckArrays.of(code.h_std)
    ch = DepolarizingChannel(eps)
    codes = np.stack([sample_error_codes(ch, n, ShotSeed(seed, i))
                      for i in range(count)])
    syndromes = ar.syndrome_of_codes(codes)
    x = ((codes == 1) | (codes == 2)).astype(np.uint8)
    z = ((codes == 2) | (codes == 3)).astype(np.uint8)
    return syndromes, np.concatenate([x, z], axis=1)


def test_get_params_roundtrip():
    dec = BeliefMatchingDecoder(d=6, epsilon=0.07, variant="bp+match")
    params = dec.get_params()
    assert params["d"] == 6 and params["epsilon"] == 0.07
    cloned = clone(dec)
    assert cloned.get_params() == params


def test_predict_before_fit_raises():
    with pytest.raises(NotFittedError):
        MwpmDecoder(d=4).predict(np.zeros((1, 32), dtype=np.uint8))


def test_predict_validates_input():
    dec = MwpmDecoder(d=4, epsilon=0.05).fit()
    with pytest.raises(ValueError):
        dec.predict(np.zeros((2, 31), dtype=np.uint8))
    with pytest.raises(ValueError):
        dec.predict(np.full((2, 32), 2))


def test_mwpm_decoder_corrections_satisfy_syndromes():
    dec = MwpmDecoder(d=4, epsilon=0.08).fit()
    X, _ = _shots(4, 32, 32, 0.08, 50)
    pred = dec.predict(X)
    assert pred.shape == (50, 64)
    ar = CheckArrays.of(dec.code_.h_std)
    from beliefmatch.pauli import CODE_FROM_XZ

    codes = CODE_FROM_XZ[pred[:, :32], pred[:, 32:]]
    assert np.array_equal(ar.syndrome_of_codes(codes), X)


def test_belief_matching_score_beats_mwpm():
    X, y = _shots(4, 32, 32, 0.07, 400, seed=3)
    bm_score = BeliefMatchingDecoder(d=4, epsilon=0.07).fit().score(X, y)
    mwpm_score = MwpmDecoder(d=4, epsilon=0.07).fit().score(X, y)
    assert 0.8 < bm_score <= 1.0
    assert bm_score >= mwpm_score


def test_score_rejects_inconsistent_pairs():
    dec = MwpmDecoder(d=4, epsilon=0.05).fit()
    X, y = _shots(4, 32, 32, 0.05, 10)
    X = X.copy()
    X[0] ^= 1
    with pytest.raises(ValueError):
        dec.score(X, y)


def test_zero_syndrome_gives_identity_correction():
    dec = BeliefMatchingDecoder(d=4, epsilon=0.05).fit()
    pred = dec.predict(np.zeros((3, 32), dtype=np.uint8))
    assert not pred.any()


def test_decode_details_shapes():
    dec = BeliefMatchingDecoder(d=4, epsilon=0.1).fit()
    X, _ = _shots(4, 32, 32, 0.1, 20, seed=5)
    pred, converged, iters, stage2 = dec.decode_details(X)
    assert pred.shape == (20, 64)
    assert converged.shape == iters.shape == stage2.shape == (20,)
    assert np.array_equal(stage2, ~converged)


def test_neural_decoder_fit_predict_smoke():
    dec = NeuralBeliefMatchingDecoder(d=3, epsilon=0.08, steps=4,
                                      batch_size=8, iterations=3, seed=1)
    dec.fit()
    assert dec.weights_.kind == "conv"
    assert len(dec.loss_report_.losses) == 4
    X, y = _shots(3, 18, 18, 0.08, 30, seed=6)
    assert dec.predict(X).shape == (30, 36)
    assert 0.0 <= dec.score(X, y) <= 1.0


def test_neural_decoder_is_cloneable():
    dec = NeuralBeliefMatchingDecoder(d=4, steps=7)
    params = dec.get_params()
    assert params["steps"] == 7
    assert clone(dec).get_params() == params
