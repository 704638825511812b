"""Embedding file + dataset CSV -> label metric -> cover tree -> SGD -> evaluation."""

from __future__ import annotations

from pathlib import Path

from ..cover_tree import build_cover_tree, derive_u_paths, derive_v_tree, write_tree
from ..errors import InvalidInputError, ParseError
from ..metric_space import build_embedding_metric, read_embeddings
from ..optimizer import SGDConfig, initialize_params, sgd_train, write_trajectory
from ..tree_loss import FLAT, U, V, evaluate, read_dataset_csv, write_params
from .csvio import write_rows
from .experiments import LOSSES

DEFAULT_ETA = 0.1


def load_labeled_dataset(path, vocabulary):
    """Read a dataset whose labels are embedding tokens or integer class indices.

    Tokens are tried first; if some label is not a token, the column is read
    as class indices, and if that fails too the missing tokens are reported.
    """
    index = {tok: i for i, tok in enumerate(vocabulary)}
    try:
        return read_dataset_csv(path, label_index=index, k=len(vocabulary))
    except ParseError:
        raise
    except InvalidInputError as token_error:
        try:
            return read_dataset_csv(path, k=len(vocabulary))
        except ParseError:
            raise token_error from None


def run_train(
    data_path,
    embeddings_path,
    out_dir,
    base=2.0,
    losses=("tree",),
    iterations=None,
    eta=None,
    theory_B=None,
    seed=0,
    shuffle=False,
    averaging=True,
    test_path=None,
):
    """Train each requested loss and write model, tree and evaluation files.

    Step size: ``eta`` (constant) if given, else theory mode with ``theory_B``
    if given, else a constant ``0.1``.  Returns the evaluation rows.
    """
    vocabulary, vectors = read_embeddings(embeddings_path)
    train = load_labeled_dataset(data_path, vocabulary)
    test = load_labeled_dataset(test_path, vocabulary) if test_path else train
    if train.d != test.d:
        raise InvalidInputError("train and test feature dimensions differ")
    metric = build_embedding_metric(vectors, vocabulary)
    tree = build_cover_tree(metric, base)
    tables = {V: derive_v_tree(tree), U: derive_u_paths(tree), FLAT: None}
    k = len(vocabulary)
    T = int(iterations) if iterations else 20 * train.n

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_tree(out_dir / "tree.txt", tree)

    rows = []
    for loss in losses:
        if loss not in LOSSES:
            raise InvalidInputError(f"unknown loss {loss!r}; choose from {', '.join(LOSSES)}")
        variant = LOSSES[loss]
        table = tables[variant]
        init = initialize_params(variant, k, k if table is None else table.k_prime, train.d, paths=table)
        if eta is not None:
            config = SGDConfig(T, step_mode="constant", eta=eta, seed=seed, shuffle=shuffle, averaging=averaging)
        elif theory_B is not None:
            factor = 1.0 if table is None else table.lipschitz_factor
            config = SGDConfig(T, B=theory_B, rho=train.rho * factor, seed=seed, shuffle=shuffle,
                               averaging=averaging)
        else:
            config = SGDConfig(T, step_mode="constant", eta=DEFAULT_ETA, seed=seed, shuffle=shuffle,
                               averaging=averaging)
        result = sgd_train(init, train, config)
        write_params(out_dir / f"model_{loss}.txt", result.final_params)
        write_trajectory(out_dir / f"trajectory_{loss}.csv", result)
        ev = evaluate(result.final_params, test, metric)
        rows.append(dict(
            loss=loss, split="test" if test_path else "train", seed=seed, iterations=T, eta=result.eta,
            mean_loss=ev.mean_loss, top1=ev.top1, similarity_accuracy=ev.similarity_accuracy,
        ))
    write_rows(out_dir / "evaluation.csv", rows)
    return rows
