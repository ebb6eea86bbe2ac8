"""Human review workflow: event-sourced sessions and the HTTP service."""
