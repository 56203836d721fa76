"""Pipeline driver: every stage as a subcommand.

Stages read the previous stage's artifacts and write the next: synth makes
posteriorgram datasets, featurize pools frame-level posteriors, construct
builds subspace archives, gram/train-svm/train-snn fit backends, score
emits trial files, eval reports EER / simplified average cost / DET points,
gradcheck runs the finite-difference oracle, and sweep grids over the
representation parameters.  A single --seed fans out to per-stage seeds by
stable hashing.  Settings come from an optional key=value config file;
explicit flags win.  Exit codes: 0 ok, 1 runtime failure, 2 usage error.
"""

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import matio, metrics, snn, svm, synthlab
from .construction import (
    OdlConfig,
    SubspaceSpec,
    construct,
    load_subspace,
    save_subspace,
)
from .errors import GrasslangError, InputError
from .manifold import Subspace
from .metrics import Trial, TrialSet
from .phonetics import (
    load_posteriorgram,
    read_manifest,
    save_posteriorgram,
    segment_posteriors,
    write_manifest,
)
from .synthlab import derive_seed

PENALTY_GRID = (0.1, 1.0, 10.0)


def _worker_count() -> int:
    return max(1, int(os.environ.get("GRASS_THREADS", "1")))


def read_config(path) -> dict:
    config = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InputError(f"{path}: malformed config line {line!r}")
        key, value = line.split("=", 1)
        config[key.strip()] = value.strip()
    return config


def _setting(args, config, key, default, cast):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in config:
        return cast(config[key])
    return default


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(args, config) -> int:
    spec = synthlab.load_taskspec(args.spec)  # fully validated before any write
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    info = synthlab.make_task(spec, out_dir)
    print(f"wrote {info['posteriorgram_files']} posteriorgram files")
    for split, path in info["manifests"].items():
        print(f"{split} manifest: {path}")
    return 0


# ---------------------------------------------------------------------------
# featurize
# ---------------------------------------------------------------------------

def _read_state_map(path) -> dict:
    mapping = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        state, unit = line.split("\t")
        mapping[int(state)] = int(unit)
    return mapping


def _read_segmentation(path):
    segments = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        start, end = line.split("\t")
        segments.append((int(start), int(end)))
    return segments


def cmd_featurize(args, config) -> int:
    records = read_manifest(args.manifest)
    state_maps = [_read_state_map(p) for p in args.state_map]
    base = Path(args.manifest).parent
    out_dir = Path(args.out_dir)
    (out_dir / "post").mkdir(parents=True, exist_ok=True)
    if any(len(paths) != len(state_maps) for _, _, paths in records):
        raise InputError("manifest channel count does not match --state-map count")
    out_records = []
    for utt_id, label, paths in records:
        new_paths = []
        for rec, rel in enumerate(paths):
            frames = matio.load_matrix(base / rel)
            segments = _read_segmentation(base / f"{rel}.seg")
            seq = segment_posteriors(frames, state_maps[rec], segments,
                                     phoneset_id=f"featurized{rec}")
            new_rel = f"post/{utt_id}.r{rec}.gsm"
            save_posteriorgram(seq, out_dir / new_rel)
            new_paths.append(new_rel)
        out_records.append((utt_id, label, new_paths))
    write_manifest(out_dir / "featurized.manifest", out_records)
    print(f"featurized {len(out_records)} utterances")
    return 0


# ---------------------------------------------------------------------------
# construct
# ---------------------------------------------------------------------------

def _load_sequences(manifest_path):
    base = Path(manifest_path).parent
    out = []
    for utt_id, label, paths in read_manifest(manifest_path):
        seqs = [load_posteriorgram(base / rel) for rel in paths]
        out.append((utt_id, label, seqs))
    return out


def construct_archive(manifest_path, out_dir, spec: SubspaceSpec,
                      odl_cfg: OdlConfig, seed: int) -> dict:
    """Build one subspace per (utterance, recognizer); skip failures."""
    rows = _load_sequences(manifest_path)
    out_dir = Path(out_dir)
    (out_dir / "sub").mkdir(parents=True, exist_ok=True)

    def build(row):
        utt_id, label, seqs = row
        built = []
        for rec, seq in enumerate(seqs):
            sub = construct(seq, spec, cfg=odl_cfg,
                            seed=derive_seed(seed, "odl", utt_id, rec),
                            source_tag=f"r{rec}")
            built.append(sub)
        return utt_id, label, built

    kept, skipped = [], 0
    with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        for row, result in zip(rows, pool.map(
                lambda r: _try_build(build, r), rows)):
            if result is None:
                skipped += 1
                print(f"warning: skipped {row[0]}", file=sys.stderr)
            else:
                kept.append(result)
    if not kept:
        raise RuntimeError("all utterances failed subspace construction")

    records = []
    for utt_id, label, subs in kept:
        paths = []
        for rec, sub in enumerate(subs):
            rel = f"sub/{utt_id}.r{rec}.gsm"
            save_subspace(sub, out_dir / rel, metadata={
                "method": spec.method, "n": spec.context_order,
                "alpha": spec.sample_ratio, "d": sub.rank})
            paths.append(rel)
        records.append((utt_id, label, paths))
    write_manifest(out_dir / "index.tsv", records)
    return {"kept": len(kept), "skipped": skipped}


def _try_build(build, row):
    try:
        return build(row)
    except GrasslangError as exc:
        print(f"warning: {row[0]}: {exc}", file=sys.stderr)
        return None


def load_archive(archive_dir):
    """Returns (utterance ids, labels, subspaces_by_recognizer)."""
    archive_dir = Path(archive_dir)
    index = archive_dir / "index.tsv"
    if not index.exists():
        raise InputError(f"missing archive index {index}")
    ids, labels, by_rec = [], [], None
    for utt_id, label, paths in read_manifest(index):
        subs = [load_subspace(archive_dir / rel)[0] for rel in paths]
        if by_rec is None:
            by_rec = [[] for _ in subs]
        for rec, sub in enumerate(subs):
            by_rec[rec].append(sub)
        ids.append(utt_id)
        labels.append(label)
    return ids, labels, by_rec


def cmd_construct(args, config) -> int:
    spec = SubspaceSpec(
        method=_setting(args, config, "method", "olr", str),
        context_order=_setting(args, config, "context_order", 3, int),
        sample_ratio=_setting(args, config, "alpha", 0.6, float))
    odl_cfg = OdlConfig(
        lambda_odl=_setting(args, config, "odl_lambda", 1e-4, float),
        iterations=_setting(args, config, "odl_iterations", 50, int))
    seed = _setting(args, config, "seed", 0, int)
    info = construct_archive(args.manifest, args.out_dir, spec, odl_cfg, seed)
    print(f"constructed {info['kept']} utterances ({info['skipped']} skipped)")
    return 0


# ---------------------------------------------------------------------------
# gram
# ---------------------------------------------------------------------------

def cmd_gram(args, config) -> int:
    ids, _, by_rec = load_archive(args.archive)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for rec, subs in enumerate(by_rec):
        gram = svm.compute_gram(subs, row_ids=ids)
        matio.save_matrix(out_dir / f"gram.r{rec}.gsm", gram.values)
    (out_dir / "gram_ids.txt").write_text(
        "\n".join(ids) + "\n", encoding="utf-8")
    print(f"wrote {len(by_rec)} Gram matrices over {len(ids)} utterances")
    return 0


# ---------------------------------------------------------------------------
# train-svm / train-snn
# ---------------------------------------------------------------------------

def _fit_svm_backend(labels, by_rec, C, fusion_reg, seed):
    """Train one-vs-rest models plus the fusion; C=None selects from the grid."""
    if C is None:
        C = select_penalty(labels, by_rec, fusion_reg, seed)
    ovr = svm.train_ovr(by_rec, labels, C=C)
    grams = [svm.compute_gram(subs) for subs in by_rec]
    raw = svm.score_raw_training(ovr, grams)
    fusion = svm.fuse_scores(raw, labels, targets=ovr.targets,
                             reg_strength=fusion_reg)
    return ovr, fusion, C


def select_penalty(labels, by_rec, fusion_reg, seed):
    """Pick C from the grid by pooled EER on one stratified split."""
    fit_idx, val_idx = metrics.stratified_kfold(labels, 3, seed)[0]
    fit_labels = [labels[i] for i in fit_idx]
    val_labels = [labels[i] for i in val_idx]
    fit_subs = [[subs[i] for i in fit_idx] for subs in by_rec]
    val_subs = [[subs[i] for i in val_idx] for subs in by_rec]
    best = (np.inf, PENALTY_GRID[0])
    for C in PENALTY_GRID:
        ovr = svm.train_ovr(fit_subs, fit_labels, C=C)
        grams = [svm.compute_gram(subs) for subs in fit_subs]
        fusion = svm.fuse_scores(svm.score_raw_training(ovr, grams), fit_labels,
                                 targets=ovr.targets, reg_strength=fusion_reg)
        fused = svm.apply_fusion(fusion, svm.score_raw(ovr, fit_subs, val_subs))
        trials = _trials_from_scores(val_labels, fused, ovr.targets,
                                     [str(i) for i in val_idx])
        value = metrics.eer(trials)
        if value < best[0]:
            best = (value, C)
    return best[1]


def _trials_from_scores(labels, score_matrix, targets, ids) -> TrialSet:
    trials = []
    for i, (label, utt_id) in enumerate(zip(labels, ids)):
        for t_idx, target in enumerate(targets):
            trials.append(Trial(utterance_id=utt_id, target_label=target,
                                score=float(score_matrix[i, t_idx]),
                                is_target=label == target))
    return TrialSet(trials)


def cmd_train_svm(args, config) -> int:
    _, labels, by_rec = load_archive(args.archive)
    C = _setting(args, config, "svm_c", None, float)
    fusion_reg = _setting(args, config, "fusion_reg", 1e-2, float)
    seed = _setting(args, config, "seed", 0, int)
    ovr, fusion, C = _fit_svm_backend(labels, by_rec, C, fusion_reg,
                                      derive_seed(seed, "svm-val"))
    svm.save_svm_backend(args.out_dir, ovr, fusion)
    print(f"trained {len(ovr.models)} binary SVMs (C={C}) and the fusion")
    return 0


def _snn_config(args, config) -> snn.SnnTrainConfig:
    return snn.SnnTrainConfig(
        learning_rate=_setting(args, config, "learning_rate", 1e-3, float),
        lr_halving_period=_setting(args, config, "lr_halving_period", 10, int),
        batch_size=_setting(args, config, "batch_size", 24, int),
        max_epochs=_setting(args, config, "epochs", 200, int),
        num_maps=_setting(args, config, "num_maps", 170, int),
        beta=_setting(args, config, "beta", 0.8, float),
        lambda_orth=_setting(args, config, "lambda_orth", 1e-9, float),
        seed=derive_seed(_setting(args, config, "seed", 0, int), "snn"))


def cmd_train_snn(args, config) -> int:
    _, labels, by_rec = load_archive(args.archive)
    cfg = _snn_config(args, config)
    dataset = [([subs[i] for subs in by_rec], labels[i])
               for i in range(len(labels))]
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = snn.train(dataset, cfg, log_path=out_dir / "train.log")
    snn.save_snn(model, out_dir)
    print(f"trained subspace network for {cfg.max_epochs} epochs"
          f" over {len(dataset)} utterances")
    return 0


# ---------------------------------------------------------------------------
# score / eval
# ---------------------------------------------------------------------------

def cmd_score(args, config) -> int:
    ids, labels, test_by_rec = load_archive(args.archive)
    if args.backend == "svm":
        if args.train_archive is None:
            raise InputError("--train-archive is required for the svm backend")
        ovr, fusion = svm.load_svm_backend(args.model)
        _, _, train_by_rec = load_archive(args.train_archive)
        raw = svm.score_raw(ovr, train_by_rec, test_by_rec)
        fused = svm.apply_fusion(fusion, raw)
        trials = _trials_from_scores(labels, fused, fusion.targets, ids)
    else:
        model = snn.load_snn(args.model)
        rows = []
        for i in range(len(ids)):
            sample = [subs[i] for subs in test_by_rec]
            rows.append(snn.detection_scores(model, sample))
        trials = _trials_from_scores(labels, np.array(rows), model.targets, ids)
    metrics.write_trials(args.out, trials)
    print(f"wrote {len(trials.trials)} trials to {args.out}")
    return 0


def cmd_eval(args, config) -> int:
    trials = metrics.read_trials(args.trials)
    pooled_eer = metrics.eer(trials)
    cavg = metrics.avg_cost(trials)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics.write_det_points(out_dir / "det.tsv", metrics.det_points(trials))
    report = (f"eer={pooled_eer!r}\n"
              f"cavg_simplified={cavg!r}\n")
    (out_dir / "metrics.txt").write_text(report, encoding="utf-8")
    print(f"EER {pooled_eer:.4f}  Cavg (simplified) {cavg:.4f}")
    return 0


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------

def cmd_gradcheck(args, config) -> int:
    seed = _setting(args, config, "seed", 0, int)
    rng = np.random.default_rng(derive_seed(seed, "gradcheck"))
    dims = [(8, 3), (6, 2)]
    cfg = snn.SnnTrainConfig(num_maps=3, beta=1.0, lambda_orth=1e-3, seed=seed)
    model = snn.init_snn(dims, ("a", "b", "c"), cfg)
    for bank in model.weight_maps:
        bank += 0.01 * rng.standard_normal(bank.shape)
    batch = []
    for _ in range(4):
        sample = [Subspace(basis=np.linalg.qr(rng.standard_normal((D, d)))[0])
                  for D, d in dims]
        batch.append((sample, model.targets[int(rng.integers(3))]))
    worst = snn.finite_difference_check(batch, model)
    print(f"max relative gradient error {worst:.3e}")
    return 0 if worst <= 1e-5 else 1


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _parse_grid(text, cast):
    return tuple(cast(v) for v in str(text).split(","))


def cmd_sweep(args, config) -> int:
    n_grid = _parse_grid(_setting(args, config, "n_grid", "2,3", str), int)
    alpha_grid = _parse_grid(_setting(args, config, "alpha_grid", "0.6", str), float)
    beta_grid = _parse_grid(_setting(args, config, "beta_grid", "1.0", str), float)
    m_grid = _parse_grid(_setting(args, config, "m_grid", "8", str), int)
    lambda_grid = _parse_grid(_setting(args, config, "lambda_grid", "1e-9", str),
                              float)
    seed = _setting(args, config, "seed", 0, int)
    backend = args.backend
    epochs = _setting(args, config, "epochs", 30, int)
    fusion_reg = _setting(args, config, "fusion_reg", 1e-2, float)
    C = _setting(args, config, "svm_c", 1.0, float)

    train_rows = _load_sequences(args.train_manifest)
    test_rows = _load_sequences(args.test_manifest)
    lines = []
    for n in n_grid:
        for alpha in alpha_grid:
            spec = SubspaceSpec(method=_setting(args, config, "method", "olr", str),
                                context_order=n, sample_ratio=alpha)
            built = [_build_rows(rows, spec, seed)
                     for rows in (train_rows, test_rows)]
            (tr_labels, tr_by_rec), (te_labels, te_by_rec) = built
            for beta in beta_grid:
                for m in m_grid:
                    for lam in lambda_grid:
                        value = _sweep_cell(
                            backend, tr_labels, tr_by_rec, te_labels, te_by_rec,
                            beta=beta, m=m, lam=lam, seed=seed, epochs=epochs,
                            C=C, fusion_reg=fusion_reg)
                        lines.append(
                            f"n={n} alpha={alpha} beta={beta} m={m}"
                            f" lambda={lam} eer={value!r}")
                        print(lines[-1])
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def _build_rows(rows, spec, seed):
    labels, by_rec = [], None
    for utt_id, label, seqs in rows:
        subs = [construct(seq, spec, seed=derive_seed(seed, "odl", utt_id, rec),
                          source_tag=f"r{rec}")
                for rec, seq in enumerate(seqs)]
        if by_rec is None:
            by_rec = [[] for _ in subs]
        for rec, sub in enumerate(subs):
            by_rec[rec].append(sub)
        labels.append(label)
    return labels, by_rec


def _sweep_cell(backend, tr_labels, tr_by_rec, te_labels, te_by_rec,
                beta, m, lam, seed, epochs, C, fusion_reg):
    ids = [str(i) for i in range(len(te_labels))]
    if backend == "svm":
        ovr, fusion, _ = _fit_svm_backend(tr_labels, tr_by_rec, C, fusion_reg,
                                          derive_seed(seed, "svm-val"))
        fused = svm.apply_fusion(fusion, svm.score_raw(ovr, tr_by_rec, te_by_rec))
        trials = _trials_from_scores(te_labels, fused, fusion.targets, ids)
    else:
        cfg = snn.SnnTrainConfig(max_epochs=epochs, num_maps=m, beta=beta,
                                 lambda_orth=lam, seed=derive_seed(seed, "snn"))
        dataset = [([subs[i] for subs in tr_by_rec], tr_labels[i])
                   for i in range(len(tr_labels))]
        model = snn.train(dataset, cfg)
        rows = [snn.detection_scores(model, [subs[i] for subs in te_by_rec])
                for i in range(len(te_labels))]
        trials = _trials_from_scores(te_labels, np.array(rows), model.targets, ids)
    return metrics.eer(trials)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grasslang",
        description="subspace phonotactic language recognition pipeline")
    parser.add_argument("--config", help="key=value settings file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--spec", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("featurize", help="pool frame posteriors into segments")
    p.add_argument("--manifest", required=True)
    p.add_argument("--state-map", action="append", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("construct", help="build subspace archives")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--method", choices=("olr", "odl", "dlm"))
    p.add_argument("--context-order", type=int, dest="context_order")
    p.add_argument("--alpha", type=float)
    p.add_argument("--odl-lambda", type=float, dest="odl_lambda")
    p.add_argument("--odl-iterations", type=int, dest="odl_iterations")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("gram", help="precompute kernel matrices")
    p.add_argument("--archive", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gram)

    p = sub.add_parser("train-svm", help="fit one-vs-rest SVMs plus fusion")
    p.add_argument("--archive", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--svm-c", type=float, dest="svm_c")
    p.add_argument("--fusion-reg", type=float, dest="fusion_reg")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train_svm)

    p = sub.add_parser("train-snn", help="train the subspace network")
    p.add_argument("--archive", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--lr-halving-period", type=int, dest="lr_halving_period")
    p.add_argument("--num-maps", type=int, dest="num_maps")
    p.add_argument("--beta", type=float)
    p.add_argument("--lambda-orth", type=float, dest="lambda_orth")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train_snn)

    p = sub.add_parser("score", help="score a test archive into trials")
    p.add_argument("--backend", choices=("svm", "snn"), required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--archive", required=True)
    p.add_argument("--train-archive")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="compute EER, simplified Cavg, DET points")
    p.add_argument("--trials", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient oracle")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("sweep", help="grid over representation parameters")
    p.add_argument("--train-manifest", required=True)
    p.add_argument("--test-manifest", required=True)
    p.add_argument("--backend", choices=("svm", "snn"), default="svm")
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=("olr", "odl", "dlm"))
    p.add_argument("--n-grid", dest="n_grid")
    p.add_argument("--alpha-grid", dest="alpha_grid")
    p.add_argument("--beta-grid", dest="beta_grid")
    p.add_argument("--m-grid", dest="m_grid")
    p.add_argument("--lambda-grid", dest="lambda_grid")
    p.add_argument("--epochs", type=int)
    p.add_argument("--svm-c", type=float, dest="svm_c")
    p.add_argument("--fusion-reg", type=float, dest="fusion_reg")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        config = read_config(args.config) if args.config else {}
        return args.func(args, config)
    except (InputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (GrasslangError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
