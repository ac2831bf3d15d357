"""Platform facade, wallets, audit, resource server and benchmark services."""
