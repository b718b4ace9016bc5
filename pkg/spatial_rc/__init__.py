# spatial-rc: spatially resolved nonlinearity and memory maps for physical reservoirs
