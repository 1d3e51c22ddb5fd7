"""textspot: learn to localize and read scene text from transcription-only supervision."""

__version__ = "0.1.0"
