"""Core configuration, errors, cryptography and storage helpers."""
