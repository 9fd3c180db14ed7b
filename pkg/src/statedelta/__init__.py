from statedelta._accel import backend_name

__version__ = "0.1.0"

