"""Block batching and the training loop."""

import logging
import queue
import threading
from collections.abc import Iterator
from pathlib import Path

import numpy as np

from app.augment.service import ImageSource
from app.common.corpus import CorpusStore
from app.common.files import write_text_atomic
from app.fusion_lm import ModelState, loss_and_grads, save_checkpoint
from app.fusion_lm.exceptions import ShapeMismatch
from app.fusion_lm.schemas import RetrievedImageSet
from app.trainer import constants
from app.trainer.exceptions import EmptyCorpus, NonFiniteLoss
from app.trainer.optim import Adam, clip_gradients, learning_rate
from app.trainer.schemas import Batch, BlockRef, LossCurve, TrainConfig

logger = logging.getLogger(__name__)

_DONE = object()


def block_refs(corpus: CorpusStore, seq_len: int) -> list[BlockRef]:
    """
    Every complete ``seq_len`` block of every document.

    Blocks start at multiples of ``seq_len``. The partial tail of each document is
    not trained on, and a document shorter than ``seq_len`` yields no block. The
    number of dropped tail tokens is logged.
    """
    refs: list[BlockRef] = []
    dropped = 0
    for doc_id, doc in enumerate(corpus.documents):
        refs.extend(BlockRef(doc_id=doc_id, start=start) for start in range(0, len(doc) - seq_len + 1, seq_len))
        dropped += len(doc) % seq_len
    if dropped:
        logger.warning(f"Dropping {dropped} tail tokens that do not fill a {seq_len}-token block")
    return refs


def make_batches(corpus: CorpusStore, seq_len: int, batch: int, seed: int) -> Iterator[Batch]:
    """
    Endless stream of token batches.

    Each epoch visits every block once in an order drawn from ``(seed, epoch)``;
    batches run across epoch boundaries.
    """
    refs = block_refs(corpus, seq_len)
    if not refs:
        raise EmptyCorpus(seq_len)

    def stream() -> Iterator[Batch]:
        pending: list[BlockRef] = []
        epoch = 0
        while True:
            for idx in np.random.default_rng([seed, epoch]).permutation(len(refs)):
                pending.append(refs[idx])
                if len(pending) == batch:
                    tokens = np.stack([corpus.documents[r.doc_id][r.start : r.start + seq_len] for r in pending])
                    yield Batch(tokens=tokens.astype(np.int64), refs=pending, epoch=epoch)
                    pending = []
            epoch += 1

    return stream()


class Prefetcher:
    """Runs an iterator on a worker thread, keeping at most ``size`` items ready."""

    def __init__(self, source: Iterator, size: int):
        self._source = source
        self._queue: queue.Queue = queue.Queue(maxsize=max(size, 1))
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._fill, name="batch-prefetch", daemon=True)
        self._thread.start()

    def _put(self, item) -> bool:
        while not self._stop.is_set():
            try:
                self._queue.put(item, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def _fill(self) -> None:
        try:
            for item in self._source:
                if not self._put(item):
                    return
        except BaseException as exc:  # re-raised on the consumer side
            self._put(exc)
            return
        self._put(_DONE)

    def __iter__(self) -> "Prefetcher":
        return self

    def __next__(self):
        item = self._queue.get()
        if item is _DONE:
            raise StopIteration
        if isinstance(item, BaseException):
            raise item
        return item

    def close(self) -> None:
        self._stop.set()
        self._thread.join(timeout=5)


def _with_images(
    batches: Iterator[Batch], corpus: CorpusStore, source: ImageSource | None, seq_len: int
) -> Iterator[tuple[Batch, list[RetrievedImageSet] | None]]:
    for batch in batches:
        if source is None:
            yield batch, None
            continue
        images = [
            source.images_for_document(ref.doc_id, corpus.documents[ref.doc_id]).window(ref.start, ref.start + seq_len)
            for ref in batch.refs
        ]
        yield batch, images


def train(
    model: ModelState,
    corpus: CorpusStore,
    source: ImageSource | None,
    cfg: TrainConfig,
    checkpoint_dir: str | Path | None = None,
    loss_csv: str | Path | None = None,
) -> tuple[ModelState, LossCurve]:
    """
    Train a copy of ``model`` for ``cfg.total_steps`` Adam steps.

    Args:
        model: Starting parameters; left untouched
        corpus: Tokenized documents
        source: Image slots per document (live retrieval or a cache); ``None`` trains without images
        cfg: Optimization settings
        checkpoint_dir: Where periodic checkpoints go when ``cfg.checkpoint_every`` is set
        loss_csv: Optional path of the ``step,lr,nll`` curve

    Returns:
        Tuple of (trained model, loss curve)
    """
    if cfg.seq_len > model.config.max_seq:
        raise ShapeMismatch(f"seq_len {cfg.seq_len} exceeds max_seq {model.config.max_seq}")
    state = model.copy()
    state.config = model.config.model_copy(update={"dropout": cfg.dropout})
    dropout_rng = np.random.default_rng([cfg.seed, 1]) if cfg.dropout > 0 else None
    adam = Adam(state.params, cfg)
    curve = LossCurve()

    stream = _with_images(make_batches(corpus, cfg.seq_len, cfg.batch_size, cfg.seed), corpus, source, cfg.seq_len)
    prefetcher = Prefetcher(stream, cfg.prefetch) if cfg.prefetch and cfg.total_steps else None
    batches = prefetcher if prefetcher is not None else stream
    logger.info(f"Training {state.n_params} parameters for {cfg.total_steps} steps")
    try:
        for step in range(1, cfg.total_steps + 1):
            batch, images = next(batches)
            nll, grads = loss_and_grads(state, batch.tokens, images, dropout_rng)
            if not np.isfinite(nll) or not all(np.isfinite(g).all() for g in grads.values()):
                raise NonFiniteLoss(step)
            lr = learning_rate(step, cfg)
            clip_gradients(grads, cfg.grad_clip)
            adam.step(state.params, grads, lr)
            curve.append(step, lr, nll)
            if step % constants.LOG_EVERY == 0 or step == cfg.total_steps:
                logger.info(f"step {step}/{cfg.total_steps} lr {lr:.2e} nll {nll:.4f}")
            if cfg.checkpoint_every and checkpoint_dir is not None and step % cfg.checkpoint_every == 0:
                save_checkpoint(state, Path(checkpoint_dir) / constants.CHECKPOINT_NAME.format(step=step))
    finally:
        if prefetcher is not None:
            prefetcher.close()

    if loss_csv is not None:
        write_text_atomic(loss_csv, curve.to_csv())
    return state, curve
