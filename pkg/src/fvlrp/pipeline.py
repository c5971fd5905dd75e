"""End-to-end orchestration helpers shared by the CLI and experiments.

Each step is a pure function of its inputs plus the configuration, with
all randomness drawn from explicitly derived seeds, so a full pipeline
run is reproducible bit for bit and independent of the thread count
(parallel maps preserve input order; nothing shares mutable state).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .descriptors import DescriptorSet, PcaModel, extract_dense, pca_apply, pca_fit
from .fisher import RawFisherVector, aggregate, improve
from .gmm import GmmModel, em_fit
from .lrp_nn import NeuralNet, image_to_input, nn_train
from .svm import SvmModel, train
from .synth import LabeledImage, label_vectors
from .util import parallel_map


@dataclass(frozen=True)
class ModelBundle:
    """Everything the explanation and evaluation stages need."""

    classes: tuple[str, ...]
    pca: PcaModel
    gmm: GmmModel
    svm: SvmModel
    net: NeuralNet | None
    patch: int
    stride: int


def extract_corpus(images: list[LabeledImage], config: PipelineConfig
                   ) -> list[DescriptorSet]:
    """Dense descriptors for every image, in corpus order."""
    return parallel_map(
        lambda img: extract_dense(img.image, config.patch, config.stride),
        images, config.threads)


def fit_pca(descriptor_sets: list[DescriptorSet], config: PipelineConfig) -> PcaModel:
    pooled = np.concatenate([ds.vectors for ds in descriptor_sets], axis=0)
    return pca_fit(pooled, config.pca_dim)


def project_all(pca: PcaModel, descriptor_sets: list[DescriptorSet],
                config: PipelineConfig) -> list[DescriptorSet]:
    return parallel_map(lambda ds: pca_apply(pca, ds), descriptor_sets,
                        config.threads)


def fit_gmm(projected: list[DescriptorSet], config: PipelineConfig) -> GmmModel:
    """EM on a seeded subsample of the pooled projected descriptors."""
    pooled = np.concatenate([ds.vectors for ds in projected], axis=0)
    count = min(config.gmm_sample_count, pooled.shape[0])
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, 101)))
    idx = np.sort(rng.choice(pooled.shape[0], size=count, replace=False))
    return em_fit(pooled[idx], config.gmm_k, seed=config.seed,
                  max_iter=config.gmm_max_iter, tol=config.gmm_tol)


def embed_all(gmm: GmmModel, projected: list[DescriptorSet],
              config: PipelineConfig) -> list[RawFisherVector]:
    return parallel_map(lambda ds: aggregate(gmm, ds), projected, config.threads)


def improved_matrix(raw_fvs: list[RawFisherVector]) -> np.ndarray:
    return np.stack([improve(fv).values for fv in raw_fvs])


def train_svm(train_images: list[LabeledImage], features: np.ndarray,
              classes: tuple[str, ...], config: PipelineConfig,
              store_dual: bool = False) -> SvmModel:
    labels = label_vectors(train_images, classes)
    return train(features, labels, c=config.svm_c, epochs=config.svm_epochs,
                 seed=config.seed, store_dual=store_dual)


def nn_inputs(images: list[LabeledImage], config: PipelineConfig) -> np.ndarray:
    size = (config.nn_input, config.nn_input)
    return np.stack(parallel_map(
        lambda img: image_to_input(img.image, size), images, config.threads))


def train_net(train_images: list[LabeledImage], classes: tuple[str, ...],
              config: PipelineConfig) -> NeuralNet:
    inputs = nn_inputs(train_images, config)
    labels = label_vectors(train_images, classes)
    return nn_train(inputs, labels, hidden=config.nn_hidden,
                    input_size=(config.nn_input, config.nn_input),
                    seed=config.seed, epochs=config.nn_epochs,
                    lr=config.nn_lr, batch_size=config.nn_batch)


def train_all(train_images: list[LabeledImage], classes: tuple[str, ...],
              config: PipelineConfig, with_nn: bool = True,
              store_dual: bool = False) -> ModelBundle:
    """Fit PCA, mixture, SVM (and optionally the network) on a corpus."""
    raw_sets = extract_corpus(train_images, config)
    pca = fit_pca(raw_sets, config)
    projected = project_all(pca, raw_sets, config)
    gmm = fit_gmm(projected, config)
    features = improved_matrix(embed_all(gmm, projected, config))
    svm_model = train_svm(train_images, features, classes, config, store_dual)
    net = train_net(train_images, classes, config) if with_nn else None
    return ModelBundle(classes, pca, gmm, svm_model, net,
                       config.patch, config.stride)


def embed_image(bundle: ModelBundle, image) -> np.ndarray:
    """Improved FV of a single image under a trained bundle."""
    ds = pca_apply(bundle.pca, extract_dense(image, bundle.patch, bundle.stride))
    return improve(aggregate(bundle.gmm, ds)).values
