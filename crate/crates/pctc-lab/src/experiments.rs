//! Packaged experiment builders and claim checks.
