"""stylesep: style/structure disentanglement and style-translation augmentation
for facial landmark detection."""

__version__ = "0.1.0"
