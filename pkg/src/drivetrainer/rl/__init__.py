"""Prioritized replay, double-Q learning and the asynchronous actor/learner loop."""
