"""End-to-end training on the shared micro corpus."""

import numpy as np
import pytest

from fvlrp.pipeline import embed_image, train_all
from fvlrp.svm import predict_multilabel


def test_bundle_shapes(micro_bundle, micro_config):
    b = micro_bundle
    cfg = micro_config
    assert b.pca.dim == cfg.pca_dim
    assert b.gmm.n_components == cfg.gmm_k
    assert b.gmm.dim == cfg.pca_dim
    fv_len = cfg.gmm_k * (1 + 2 * cfg.pca_dim)
    assert b.svm.weights.shape == (len(b.classes), fv_len)
    assert b.svm.thresholds.shape == (len(b.classes),)
    assert b.net.input_size == (cfg.nn_input, cfg.nn_input)
    assert b.patch == cfg.patch and b.stride == cfg.stride


def test_training_is_deterministic(micro_corpus, micro_config, micro_bundle):
    spec, train_imgs, _ = micro_corpus
    again = train_all(train_imgs, spec.class_names, micro_config, with_nn=False)
    np.testing.assert_array_equal(again.svm.weights, micro_bundle.svm.weights)
    np.testing.assert_array_equal(again.svm.thresholds,
                                  micro_bundle.svm.thresholds)
    np.testing.assert_array_equal(again.gmm.means, micro_bundle.gmm.means)
    np.testing.assert_array_equal(again.pca.basis,
                                  micro_bundle.pca.basis)


def test_bundle_separates_training_data(micro_corpus, micro_bundle):
    _, train_imgs, _ = micro_corpus
    correct = 0
    for im in train_imgs:
        phi = embed_image(micro_bundle, im.image)
        pred = predict_multilabel(micro_bundle.svm, phi)
        correct += pred.as_dict()[im.labels[0]][1]
    assert correct / len(train_imgs) >= 0.9


def test_embed_image_unit_norm(micro_corpus, micro_bundle):
    _, _, test_imgs = micro_corpus
    phi = embed_image(micro_bundle, test_imgs[0].image)
    assert np.linalg.norm(phi) == pytest.approx(1.0)
