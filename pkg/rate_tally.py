import logging
import math

logger = logging.getLogger(__name__)


class RateTally:
    """
    Accumulate named measurements and report their averages.

    Booleans count as 0/1, so the average of a pass/fail series is its success rate.
    """

    def __init__(self):
        self.buffers = {}

    def add_measurement(self, name, value):
        """
        Add a measurement to the tally.

        Args:
            name: Name/key of the measurement (e.g. 'detection', 'psnr')
            value: Numeric or boolean value
        """
        if name not in self.buffers:
            self.buffers[name] = []

        try:
            self.buffers[name].append(float(value))
        except (ValueError, TypeError) as e:
            logger.warning("Failed to add measurement %s: %s", name, e)

    def get_average(self, name):
        """
        Average of all values recorded under a name.

        Returns:
            float: Mean value, or None if nothing was recorded
        """
        values = self.buffers.get(name)
        if not values:
            return None
        finite = [v for v in values if math.isfinite(v)]
        if len(finite) != len(values):
            # Identical-image PSNR is +inf; average what is measurable
            logger.debug("%s: %d non-finite values left out", name, len(values) - len(finite))
            if not finite:
                return values[0]
        return sum(finite) / len(finite)

    def get_count(self, name):
        return len(self.buffers.get(name, ()))

    def names(self):
        return list(self.buffers)

    def reset(self, name):
        """
        Drop all values recorded under a name and return their average.
        """
        average = self.get_average(name)
        self.buffers.pop(name, None)
        return average

    def get_buffer_stats(self, name):
        """
        Statistics for one measurement.

        Returns:
            dict: 'count', 'average', 'min' and 'max' (None when empty)
        """
        values = self.buffers.get(name, [])
        if not values:
            return {"count": 0, "average": None, "min": None, "max": None}
        return {
            "count": len(values),
            "average": self.get_average(name),
            "min": min(values),
            "max": max(values),
        }
