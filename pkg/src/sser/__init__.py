"""Self-supervised recurrent event representations: training, integer inference,
streaming encoding and pipeline modelling for event-camera data."""

__version__ = "0.1.0"
