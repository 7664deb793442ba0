"""Semi-supervised multi-contrast MRI synthesis from undersampled acquisitions."""
__version__ = "0.1.0"
