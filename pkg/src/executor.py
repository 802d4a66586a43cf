import queue, threading

from abc import abstractmethod
from typing import Any, Iterator, Optional


class Producer:
    """Yields the items of one pass, e.g. the batches of an epoch, in a fixed order."""

    @abstractmethod
    def produce(self) -> Iterator[Any]:
        pass


class _Done:
    def __init__(self, error: Optional[BaseException] = None) -> None:
        self.error = error


class Prefetcher:
    """Runs a producer in a background thread and hands its items over through a bounded queue.

    The consumer sees exactly the producer's sequence. Errors raised by the producer are re-raised
    in the consuming thread. With `depth == 0` the items are produced inline.
    """

    def __init__(self, producer: Producer, depth: int = 2) -> None:
        def target() -> None:
            try:
                for item in producer.produce():
                    while self._event.is_set():
                        try:
                            self._queue.put(item, timeout=0.1)
                            break
                        except queue.Full:
                            continue
                    if not self._event.is_set():
                        return
                self._put_done(_Done())
            except BaseException as e:
                self._put_done(_Done(e))

        self._producer = producer
        self._depth = depth
        self._queue: queue.Queue = queue.Queue(maxsize=max(depth, 1))
        self._event = threading.Event()
        self._thread = threading.Thread(target=target, daemon=True)

    def _put_done(self, done: _Done) -> None:
        while self._event.is_set():
            try:
                self._queue.put(done, timeout=0.1)
                return
            except queue.Full:
                continue

    def start(self) -> None:
        if self._depth > 0:
            self._event.set()
            self._thread.start()

    def stop(self) -> None:
        if self._depth > 0 and self._thread.is_alive():
            self._event.clear()
            self._thread.join()

    def __iter__(self) -> Iterator[Any]:
        if self._depth == 0:
            yield from self._producer.produce()
            return

        self.start()
        try:
            while True:
                item = self._queue.get()
                if isinstance(item, _Done):
                    if item.error is not None:
                        raise item.error
                    return
                yield item
        finally:
            self.stop()
