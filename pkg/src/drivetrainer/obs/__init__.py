"""BEV raster and node-feature observations in the ego frame."""
