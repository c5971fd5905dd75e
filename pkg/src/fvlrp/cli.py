"""Command-line pipeline: staged subcommands with cached artifacts.

Each stage writes its artifacts under a working directory plus a
manifest recording the configuration hash, the seed, the upstream
manifests it consumed, and a digest of every file it wrote. A stage
refuses to run when a required upstream stage is missing, was built
under a different configuration, or has modified artifacts on disk.

Exit codes: 0 success, 1 usage error, 2 missing/stale dependency,
3 validation or verification failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import report
from .config import PipelineConfig, load_config
from .descriptors import (extract_dense, load_descriptors, pca_apply, pca_fit,
                          save_descriptors)
from .errors import (DependencyError, PipelineError, UsageError,
                     ValidationError, VerificationError)
from .evaluation import compare_orderings, context_report
from .fisher import (EmbeddingIndex, aggregate, hellinger_check, improve,
                     load_fisher_vector, save_fisher_vector)
from .gmm import em_fit
from .imaging import load_annotations, load_image, save_annotations, save_image
from .lrp_fv import explain
from .lrp_nn import image_to_input, nn_train
from .serialization import load_model, save_model
from .svm import score, train, with_thresholds
from .synth import (LabeledImage, generate_corpus, inject_artefact,
                    label_vectors, two_class_spec)
from .util import file_hash, parallel_map
from .verification import run_all

_VARIANT_FLAGS = {"plain": "plain", "eps": "epsilon", "abs": "absolute"}

STAGE_SYNTH = "synth-gen"
STAGE_EXTRACT = "extract"
STAGE_PCA = "pca-fit"
STAGE_GMM = "gmm-fit"
STAGE_EMBED = "embed"
STAGE_SVM = "svm-train"
STAGE_NN = "nn-train"


# ---------------------------------------------------------------------------
# manifests and artifact bookkeeping


def _manifest_path(out_dir: str, stage: str) -> str:
    return os.path.join(out_dir, "manifests", f"{stage}.json")


def _write_manifest(out_dir: str, stage: str, config: PipelineConfig,
                    inputs: list[str], outputs: list[str],
                    extra: dict | None = None) -> None:
    """Record what a stage produced; paths are relative to the out dir."""
    os.makedirs(os.path.join(out_dir, "manifests"), exist_ok=True)
    doc = {
        "stage": stage,
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "inputs": {s: file_hash(_manifest_path(out_dir, s)) for s in inputs},
        "outputs": {rel: file_hash(os.path.join(out_dir, rel))
                    for rel in sorted(outputs)},
    }
    if extra:
        doc.update(extra)
    with open(_manifest_path(out_dir, stage), "w", encoding="ascii",
              newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _require_stage(out_dir: str, stage: str, config: PipelineConfig,
                   needed_by: str) -> dict:
    """Load an upstream manifest, refusing missing or stale artifacts."""
    path = _manifest_path(out_dir, stage)
    if not os.path.exists(path):
        raise DependencyError(
            f"`{needed_by}` needs artifacts from `{stage}`; "
            f"run `fvlrp {stage}` first")
    with open(path, "r", encoding="ascii") as fh:
        manifest = json.load(fh)
    if manifest.get("config_hash") != config.config_hash():
        raise DependencyError(
            f"stale cache: `{stage}` artifacts were built under a different "
            f"configuration; re-run `fvlrp {stage}`")
    for rel, digest in manifest.get("outputs", {}).items():
        full = os.path.join(out_dir, rel)
        if not os.path.exists(full) or file_hash(full) != digest:
            raise DependencyError(
                f"artifact {rel} recorded by `{stage}` is missing or "
                f"modified; re-run `fvlrp {stage}`")
    return manifest


def _ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _rel(out_dir: str, path: str) -> str:
    return os.path.relpath(path, out_dir).replace(os.sep, "/")


# ---------------------------------------------------------------------------
# corpus storage


def _index_path(out_dir: str) -> str:
    return os.path.join(out_dir, "corpus", "index.tsv")


def _save_corpus_split(out_dir: str, split: str,
                       images: list[LabeledImage]) -> list[str]:
    written = []
    split_dir = _ensure_dir(os.path.join(out_dir, "corpus", split))
    for img in images:
        img_path = os.path.join(split_dir, f"{img.image_id}.pgm")
        ann_path = os.path.join(split_dir, f"{img.image_id}.txt")
        save_image(img.image, img_path)
        save_annotations(list(img.boxes), ann_path)
        written += [_rel(out_dir, img_path), _rel(out_dir, ann_path)]
    return written


def _save_corpus_index(out_dir: str, train: list[LabeledImage],
                       test: list[LabeledImage]) -> str:
    rows = []
    for split, images in (("train", train), ("test", test)):
        for img in images:
            rows.append((split, img.image_id,
                         f"corpus/{split}/{img.image_id}.pgm",
                         f"corpus/{split}/{img.image_id}.txt",
                         ",".join(img.labels),
                         ",".join(img.flags) if img.flags else "-"))
    return report.write_table(_index_path(out_dir),
                              ("split", "image", "file", "annotations",
                               "labels", "flags"), rows)


def _load_corpus_index(out_dir: str) -> list[dict]:
    with open(_index_path(out_dir), "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    header = lines[0].split("\t")
    entries = []
    for line in lines[1:]:
        entries.append(dict(zip(header, line.split("\t"))))
    return entries


def _load_split(out_dir: str, split: str) -> list[LabeledImage]:
    images = []
    for entry in _load_corpus_index(out_dir):
        if entry["split"] != split:
            continue
        img = load_image(os.path.join(out_dir, entry["file"]))
        boxes = load_annotations(os.path.join(out_dir, entry["annotations"]))
        labels = tuple(entry["labels"].split(",")) if entry["labels"] else ()
        flags = () if entry["flags"] == "-" else tuple(entry["flags"].split(","))
        images.append(LabeledImage(img, labels, tuple(boxes),
                                   entry["image"], flags))
    return images


def _split_ids(out_dir: str, split: str) -> list[str]:
    return [e["image"] for e in _load_corpus_index(out_dir)
            if e["split"] == split]


def _corpus_classes(manifest: dict) -> tuple[str, ...]:
    return tuple(manifest["classes"])


# ---------------------------------------------------------------------------
# model paths


def _model_path(out_dir: str, name: str) -> str:
    return os.path.join(out_dir, "models", f"{name}.json")


# ---------------------------------------------------------------------------
# subcommands


def _cmd_synth_gen(config: PipelineConfig, args) -> int:
    out_dir = args.out
    spec = two_class_spec(config.corpus_rho, seed=config.seed,
                          train_per_class=config.train_per_class,
                          test_per_class=config.test_per_class,
                          size=config.corpus_size)
    train_imgs, test_imgs = generate_corpus(spec)
    if config.artefact_class:
        train_imgs = [inject_artefact(im, config.artefact_class)
                      for im in train_imgs]
        test_imgs = [inject_artefact(im, config.artefact_class)
                     for im in test_imgs]
    outputs = _save_corpus_split(out_dir, "train", train_imgs)
    outputs += _save_corpus_split(out_dir, "test", test_imgs)
    outputs.append(_rel(out_dir, _save_corpus_index(out_dir, train_imgs,
                                                    test_imgs)))
    _write_manifest(out_dir, STAGE_SYNTH, config, [], outputs,
                    {"classes": [c.name for c in spec.classes]})
    print(f"synth-gen: {len(train_imgs)} train / {len(test_imgs)} test images "
          f"({spec.width}x{spec.height}, rho={spec.context_correlation})")
    return 0


def _desc_path(out_dir: str, image_id: str, split: str) -> str:
    return os.path.join(out_dir, "descriptors", split, f"{image_id}.desc")


def _cmd_extract(config: PipelineConfig, args) -> int:
    out_dir = args.out
    _require_stage(out_dir, STAGE_SYNTH, config, STAGE_EXTRACT)
    outputs = []
    total = 0
    for split in ("train", "test"):
        images = _load_split(out_dir, split)
        _ensure_dir(os.path.join(out_dir, "descriptors", split))
        sets = parallel_map(
            lambda im: extract_dense(im.image, config.patch, config.stride),
            images, config.threads)
        for img, ds in zip(images, sets):
            path = _desc_path(out_dir, img.image_id, split)
            save_descriptors(ds, path)
            outputs.append(_rel(out_dir, path))
            total += len(ds)
    _write_manifest(out_dir, STAGE_EXTRACT, config, [STAGE_SYNTH], outputs)
    print(f"extract: {total} descriptors "
          f"(patch {config.patch}, stride {config.stride})")
    return 0


def _load_descriptor_sets(out_dir: str, split: str, config: PipelineConfig):
    ids = _split_ids(out_dir, split)
    return ids, parallel_map(
        lambda i: load_descriptors(_desc_path(out_dir, i, split)),
        ids, config.threads)


def _cmd_pca_fit(config: PipelineConfig, args) -> int:
    out_dir = args.out
    _require_stage(out_dir, STAGE_EXTRACT, config, STAGE_PCA)
    _, sets = _load_descriptor_sets(out_dir, "train", config)
    pooled = np.concatenate([ds.vectors for ds in sets], axis=0)
    model = pca_fit(pooled, config.pca_dim)
    _ensure_dir(os.path.join(out_dir, "models"))
    path = _model_path(out_dir, "pca")
    save_model(model, path)
    _write_manifest(out_dir, STAGE_PCA, config, [STAGE_EXTRACT],
                    [_rel(out_dir, path)])
    print(f"pca-fit: {pooled.shape[1]} -> {config.pca_dim} dims "
          f"on {pooled.shape[0]} descriptors")
    return 0


def _cmd_gmm_fit(config: PipelineConfig, args) -> int:
    out_dir = args.out
    _require_stage(out_dir, STAGE_EXTRACT, config, STAGE_GMM)
    _require_stage(out_dir, STAGE_PCA, config, STAGE_GMM)
    pca = load_model(_model_path(out_dir, "pca"), "pca")
    _, sets = _load_descriptor_sets(out_dir, "train", config)
    projected = parallel_map(lambda ds: pca_apply(pca, ds), sets,
                             config.threads)
    pooled = np.concatenate([ds.vectors for ds in projected], axis=0)
    count = min(config.gmm_sample_count, pooled.shape[0])
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, 101)))
    idx = np.sort(rng.choice(pooled.shape[0], size=count, replace=False))
    model = em_fit(pooled[idx], config.gmm_k, seed=config.seed,
                   max_iter=config.gmm_max_iter, tol=config.gmm_tol)
    path = _model_path(out_dir, "gmm")
    save_model(model, path)
    _write_manifest(out_dir, STAGE_GMM, config, [STAGE_EXTRACT, STAGE_PCA],
                    [_rel(out_dir, path)])
    print(f"gmm-fit: K={config.gmm_k} on {count} sampled descriptors, "
          f"{len(model.ll_trace)} EM iterations")
    return 0


def _fvec_path(out_dir: str, image_id: str, split: str) -> str:
    return os.path.join(out_dir, "embeddings", split, f"{image_id}.fvec")


def _cmd_embed(config: PipelineConfig, args) -> int:
    out_dir = args.out
    for stage in (STAGE_EXTRACT, STAGE_PCA, STAGE_GMM):
        _require_stage(out_dir, stage, config, STAGE_EMBED)
    pca = load_model(_model_path(out_dir, "pca"), "pca")
    gmm = load_model(_model_path(out_dir, "gmm"), "gmm")
    outputs = []
    for split in ("train", "test"):
        ids, sets = _load_descriptor_sets(out_dir, split, config)
        _ensure_dir(os.path.join(out_dir, "embeddings", split))
        raws = parallel_map(lambda ds: aggregate(gmm, pca_apply(pca, ds)),
                            sets, config.threads)
        for image_id, raw in zip(ids, raws):
            path = _fvec_path(out_dir, image_id, split)
            save_fisher_vector(raw, path)
            outputs.append(_rel(out_dir, path))
    _write_manifest(out_dir, STAGE_EMBED, config,
                    [STAGE_EXTRACT, STAGE_PCA, STAGE_GMM], outputs)
    print(f"embed: {len(outputs)} Fisher vectors of length "
          f"{(1 + 2 * config.pca_dim) * config.gmm_k}")
    return 0


def _load_feature_matrix(out_dir: str, split: str,
                         config: PipelineConfig) -> tuple[list[str], np.ndarray]:
    ids = _split_ids(out_dir, split)
    raws = parallel_map(
        lambda i: load_fisher_vector(_fvec_path(out_dir, i, split)),
        ids, config.threads)
    return ids, np.stack([improve(r).values for r in raws])


def _cmd_svm_train(config: PipelineConfig, args) -> int:
    out_dir = args.out
    synth = _require_stage(out_dir, STAGE_SYNTH, config, STAGE_SVM)
    _require_stage(out_dir, STAGE_EMBED, config, STAGE_SVM)
    classes = _corpus_classes(synth)
    train_imgs = _load_split(out_dir, "train")
    _, features = _load_feature_matrix(out_dir, "train", config)
    labels = label_vectors(train_imgs, classes)
    model = train(features, labels, c=config.svm_c, epochs=config.svm_epochs,
                  seed=config.seed)
    model = with_thresholds(model, features, labels)
    path = _model_path(out_dir, "svm")
    save_model(model, path)
    _write_manifest(out_dir, STAGE_SVM, config, [STAGE_SYNTH, STAGE_EMBED],
                    [_rel(out_dir, path)])
    taus = ", ".join(f"{c}: {t:.4f}" for c, t in zip(classes, model.thresholds))
    print(f"svm-train: {len(classes)} classes on {features.shape[0]} images "
          f"(C={config.svm_c}); thresholds {taus}")
    return 0


def _cmd_nn_train(config: PipelineConfig, args) -> int:
    out_dir = args.out
    synth = _require_stage(out_dir, STAGE_SYNTH, config, STAGE_NN)
    classes = _corpus_classes(synth)
    train_imgs = _load_split(out_dir, "train")
    size = (config.nn_input, config.nn_input)
    inputs = np.stack(parallel_map(
        lambda im: image_to_input(im.image, size), train_imgs,
        config.threads))
    labels = label_vectors(train_imgs, classes)
    net = nn_train(inputs, labels, hidden=config.nn_hidden, input_size=size,
                   seed=config.seed, epochs=config.nn_epochs, lr=config.nn_lr,
                   batch_size=config.nn_batch)
    path = _model_path(out_dir, "nn")
    save_model(net, path)
    _write_manifest(out_dir, STAGE_NN, config, [STAGE_SYNTH],
                    [_rel(out_dir, path)])
    arch = "-".join(str(s) for s in
                    (inputs.shape[1],) + tuple(config.nn_hidden) + (len(classes),))
    print(f"nn-train: {arch} network on {inputs.shape[0]} images")
    return 0


def _cmd_predict(config: PipelineConfig, args) -> int:
    out_dir = args.out
    synth = _require_stage(out_dir, STAGE_SYNTH, config, "predict")
    _require_stage(out_dir, STAGE_EMBED, config, "predict")
    _require_stage(out_dir, STAGE_SVM, config, "predict")
    classes = _corpus_classes(synth)
    svm_model = load_model(_model_path(out_dir, "svm"), "svm")
    test_imgs = _load_split(out_dir, "test")
    ids, features = _load_feature_matrix(out_dir, "test", config)
    by_id = {img.image_id: img for img in test_imgs}
    rows = []
    correct = {c: 0 for c in classes}
    for image_id, phi in zip(ids, features):
        img = by_id[image_id]
        for c in classes:
            k = svm_model.class_index(c)
            f = float(score(svm_model, phi, c))
            decision = int(f > float(svm_model.thresholds[k]))
            truth = int(c in img.labels)
            correct[c] += int(decision == truth)
            rows.append((image_id, c, f, decision, truth))
    _ensure_dir(os.path.join(out_dir, "reports"))
    path = os.path.join(out_dir, "reports", "predictions.tsv")
    report.write_table(path, ("image", "class", "score", "decision", "label"),
                       rows)
    _write_manifest(out_dir, "predict", config,
                    [STAGE_SYNTH, STAGE_EMBED, STAGE_SVM],
                    [_rel(out_dir, path)])
    acc = ", ".join(f"{c}: {correct[c] / len(ids):.3f}" for c in classes)
    print(f"predict: {len(ids)} test images; accuracy {acc}")
    print(f"wrote {path}")
    return 0


def _cmd_explain(config: PipelineConfig, args) -> int:
    out_dir = args.out
    _require_stage(out_dir, STAGE_SYNTH, config, "explain")
    _require_stage(out_dir, STAGE_PCA, config, "explain")
    _require_stage(out_dir, STAGE_GMM, config, "explain")
    _require_stage(out_dir, STAGE_SVM, config, "explain")
    if not args.image or not args.cls:
        raise UsageError("explain needs --image and --class")
    entries = {e["image"]: e for e in _load_corpus_index(out_dir)}
    if args.image not in entries:
        raise ValidationError(f"image {args.image!r} not in the corpus index")
    img = load_image(os.path.join(out_dir, entries[args.image]["file"]))
    pca = load_model(_model_path(out_dir, "pca"), "pca")
    gmm = load_model(_model_path(out_dir, "gmm"), "gmm")
    svm_model = load_model(_model_path(out_dir, "svm"), "svm")
    expl = explain(img, gmm, pca, svm_model, args.cls,
                   variant=config.variant, epsilon=config.epsilon,
                   patch=config.patch, stride=config.stride)
    ds = pca_apply(pca, extract_dense(img, config.patch, config.stride))
    stem = f"{args.image}_{args.cls}_{config.variant}"
    dest = _ensure_dir(os.path.join(out_dir, "reports", "explain"))
    paths = report.write_explanation(
        dest, stem, img, expl, ds,
        EmbeddingIndex(gmm.n_components, gmm.dim))
    _write_manifest(out_dir, "explain", config,
                    [STAGE_SYNTH, STAGE_PCA, STAGE_GMM, STAGE_SVM],
                    [_rel(out_dir, p) for p in paths])
    state = "positive" if expl.prediction_positive else "negative"
    print(f"explain: f({args.image}, {args.cls}) = {expl.score:.6f} "
          f"({state}); variant {config.variant}")
    for p in paths:
        print(f"wrote {p}")
    return 0


def _cmd_morf_eval(config: PipelineConfig, args) -> int:
    out_dir = args.out
    synth = _require_stage(out_dir, STAGE_SYNTH, config, "morf-eval")
    _require_stage(out_dir, STAGE_PCA, config, "morf-eval")
    _require_stage(out_dir, STAGE_GMM, config, "morf-eval")
    _require_stage(out_dir, STAGE_SVM, config, "morf-eval")
    classes = _corpus_classes(synth)
    if args.cls and args.cls not in classes:
        raise ValidationError(f"class {args.cls!r} not in corpus classes {classes}")
    targets = (args.cls,) if args.cls else classes
    pca = load_model(_model_path(out_dir, "pca"), "pca")
    gmm = load_model(_model_path(out_dir, "gmm"), "gmm")
    svm_model = load_model(_model_path(out_dir, "svm"), "svm")
    test_imgs = _load_split(out_dir, "test")
    outputs = []
    for cls in targets:
        rep = compare_orderings(
            test_imgs, cls, gmm, pca, svm_model,
            variants=(config.variant,), epsilon=config.epsilon,
            batch=config.morf_batch, steps=config.morf_steps,
            repetitions=config.morf_repetitions, seed=config.seed,
            patch=config.patch, stride=config.stride)
        dest = _ensure_dir(os.path.join(out_dir, "reports", "morf", cls))
        paths = report.write_morf_tables(dest, rep)
        paths += report.write_morf_figure(dest, rep)
        outputs += [_rel(out_dir, p) for p in paths]
        print(report.morf_summary_text(rep))
        for p in paths:
            print(f"wrote {p}")
    _write_manifest(out_dir, "morf-eval", config,
                    [STAGE_SYNTH, STAGE_PCA, STAGE_GMM, STAGE_SVM], outputs)
    return 0


def _cmd_context_report(config: PipelineConfig, args) -> int:
    out_dir = args.out
    _require_stage(out_dir, STAGE_SYNTH, config, "context-report")
    _require_stage(out_dir, STAGE_PCA, config, "context-report")
    _require_stage(out_dir, STAGE_GMM, config, "context-report")
    _require_stage(out_dir, STAGE_SVM, config, "context-report")
    _require_stage(out_dir, STAGE_NN, config, "context-report")
    pca = load_model(_model_path(out_dir, "pca"), "pca")
    gmm = load_model(_model_path(out_dir, "gmm"), "gmm")
    svm_model = load_model(_model_path(out_dir, "svm"), "svm")
    net = load_model(_model_path(out_dir, "nn"), "nn")
    test_imgs = _load_split(out_dir, "test")
    rep = context_report(test_imgs, gmm, pca, svm_model, net,
                         variant=config.variant, epsilon=config.epsilon,
                         nn_alpha=config.nn_alpha, nn_beta=config.nn_beta,
                         patch=config.patch, stride=config.stride)
    dest = _ensure_dir(os.path.join(out_dir, "reports", "context"))
    paths = report.write_context_tables(dest, rep)
    paths += report.write_context_figure(dest, rep)
    _write_manifest(out_dir, "context-report", config,
                    [STAGE_SYNTH, STAGE_PCA, STAGE_GMM, STAGE_SVM, STAGE_NN],
                    [_rel(out_dir, p) for p in paths])
    print(report.context_summary_text(rep))
    for p in paths:
        print(f"wrote {p}")
    return 0


def _trained_model_checks(config: PipelineConfig, out_dir: str) -> list:
    """Spot checks against the trained artifacts, when they exist."""
    from .verification import CheckResult

    for stage in (STAGE_SYNTH, STAGE_PCA, STAGE_GMM, STAGE_EMBED, STAGE_SVM):
        if not os.path.exists(_manifest_path(out_dir, stage)):
            return []
        _require_stage(out_dir, stage, config, "verify")
    pca = load_model(_model_path(out_dir, "pca"), "pca")
    gmm = load_model(_model_path(out_dir, "gmm"), "gmm")
    svm_model = load_model(_model_path(out_dir, "svm"), "svm")
    test_imgs = _load_split(out_dir, "test")
    results = []

    img = test_imgs[0]
    cls = svm_model.classes[0]
    expl = explain(img.image, gmm, pca, svm_model, cls, variant="absolute",
                   patch=config.patch, stride=config.stride)
    gap = abs(float(expl.heatmap.values.sum()) - expl.score)
    ok = gap <= 1e-9 * max(1.0, abs(expl.score))
    results.append(CheckResult(
        "trained-conservation", ok,
        f"pixel sum vs f gap {gap:.2e} on {img.image_id}"))

    ids = _split_ids(out_dir, "test")[:2]
    raws = [load_fisher_vector(_fvec_path(out_dir, i, "test")) for i in ids]
    if len(raws) == 2:
        lhs, rhs = hellinger_check(raws[0], raws[1])
        ok = abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))
        results.append(CheckResult(
            "trained-hellinger", ok, f"|lhs-rhs| = {abs(lhs - rhs):.2e}"))
    return results


def _cmd_verify(config: PipelineConfig, args) -> int:
    results = run_all(seed=config.seed)
    results += _trained_model_checks(config, args.out)
    failed = 0
    for res in results:
        mark = "ok  " if res.passed else "FAIL"
        print(f"{mark} {res.name}: {res.detail}")
        failed += 0 if res.passed else 1
    if failed:
        raise VerificationError(f"{failed} of {len(results)} checks failed")
    print(f"verify: all {len(results)} checks passed")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    """Argparse that raises instead of exiting, for uniform exit codes."""

    def error(self, message):
        raise UsageError(message)


_COMMANDS = {
    STAGE_SYNTH: (_cmd_synth_gen, "render the synthetic corpus to disk"),
    STAGE_EXTRACT: (_cmd_extract, "dense local descriptors for every image"),
    STAGE_PCA: (_cmd_pca_fit, "fit the descriptor projection"),
    STAGE_GMM: (_cmd_gmm_fit, "fit the visual-word mixture via EM"),
    STAGE_EMBED: (_cmd_embed, "aggregate per-image Fisher vectors"),
    STAGE_SVM: (_cmd_svm_train, "train one-vs-rest linear classifiers"),
    STAGE_NN: (_cmd_nn_train, "train the pixel-level comparison network"),
    "predict": (_cmd_predict, "score the test split"),
    "explain": (_cmd_explain, "relevance heatmap for one image and class"),
    "morf-eval": (_cmd_morf_eval,
                  "feature-replacement curves: relevance vs random ordering"),
    "context-report": (_cmd_context_report,
                       "outside/inside relevance ratios for both models"),
    "verify": (_cmd_verify, "run the seeded invariant and oracle checks"),
}


def build_parser() -> _Parser:
    parser = _Parser(prog="fvlrp",
                     description="Fisher-vector classification with "
                                 "pixel-level relevance explanations")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name, (_, help_text) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="PATH",
                       help="JSON config file (flags override it)")
        p.add_argument("--seed", type=int, help="master random seed")
        p.add_argument("--threads", type=int, help="worker thread cap")
        p.add_argument("--variant", choices=tuple(_VARIANT_FLAGS),
                       help="relevance redistribution variant")
        p.add_argument("--epsilon", type=float, help="stabilizer strength")
        p.add_argument("--class", dest="cls", metavar="NAME",
                       help="class name for explain/morf-eval")
        p.add_argument("--image", metavar="ID",
                       help="corpus image id for explain")
        p.add_argument("--out", metavar="DIR", default="runs",
                       help="working directory for artifacts (default: runs)")
    return parser


def _resolve_config(args) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    variant = _VARIANT_FLAGS[args.variant] if args.variant else None
    return config.with_overrides(seed=args.seed, threads=args.threads,
                                 variant=variant, epsilon=args.epsilon)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_help()
            raise UsageError("a subcommand is required")
        config = _resolve_config(args)
        os.makedirs(args.out, exist_ok=True)
        handler = _COMMANDS[args.command][0]
        return handler(config, args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DependencyError as exc:
        print(f"dependency error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
