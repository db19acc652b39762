import threading

from dccert.workers import map_parallel


class TestMapParallel:
    def test_serial(self):
        assert map_parallel(lambda x: x * x, range(5)) == [0, 1, 4, 9, 16]

    def test_pool_keeps_order(self):
        assert map_parallel(lambda x: -x, range(50), threads=4) == [-x for x in range(50)]

    def test_pool_uses_threads(self):
        seen = set()

        def record(x):
            seen.add(threading.get_ident())
            return x

        map_parallel(record, range(8), threads=2)
        assert 1 <= len(seen) <= 2

    def test_empty(self):
        assert map_parallel(lambda x: x, [], threads=3) == []
