"""Stack-only RNNG, its training loop, beam search and a sequential LSTM baseline."""
