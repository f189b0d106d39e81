"""Partitioned DN-alpha coupling schemes for fluid-structure interaction with large added mass."""
