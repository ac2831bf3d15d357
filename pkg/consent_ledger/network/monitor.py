"""FIFO work queue that tracks its time-averaged occupancy."""

import simpy


class MonitoredResource(simpy.Resource):
    """A simpy Resource integrating (in service + waiting) over time."""

    def __init__(self, env: simpy.Environment, capacity: int = 1):
        super().__init__(env, capacity=capacity)
        self._area = 0.0
        self._since = env.now
        self._last = env.now

    @property
    def level(self) -> int:
        return len(self.users) + len(self.queue)

    def _tick(self) -> None:
        now = self._env.now
        self._area += self.level * (now - self._last)
        self._last = now

    def request(self):
        self._tick()
        return super().request()

    def release(self, request):
        self._tick()
        return super().release(request)

    def reset(self) -> None:
        """Start a fresh measurement window at the current time."""
        self._area = 0.0
        self._since = self._env.now
        self._last = self._env.now

    def mean_occupancy(self) -> float:
        self._tick()
        span = self._env.now - self._since
        return self._area / span if span > 0 else 0.0
