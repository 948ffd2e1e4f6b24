# Shared helpers: configuration, logging, SQLite access, timestamps, plists
