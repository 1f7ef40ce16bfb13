"""Bias-aware relative pose estimation."""
