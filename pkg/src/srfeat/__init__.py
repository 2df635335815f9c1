"""Speech-recognition-based (SR) features for dysarthria severity classification."""

__version__ = "0.1.0"
