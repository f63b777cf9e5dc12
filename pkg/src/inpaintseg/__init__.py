"""Unsupervised anomaly segmentation for brain MRI slices.

Pipeline: train an adversarial inpainting network on healthy slices only,
localize anomalies as the regions of highest reconstruction loss under a
masked sliding window, then refine the localization with graph-based
superpixel segmentation.
"""

__version__ = "0.1.0"
