"""Acoustic-to-EEG feature pipeline: preprocessing, features, KPCA, GRU/GAN mappers."""
