"""2D traffic world: maps, vehicles, controllers, background traffic and replay logs."""
