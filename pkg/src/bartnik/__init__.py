"""Static vacuum extensions of Bartnik data near Schwarzschild."""

__version__ = "0.1.0"
