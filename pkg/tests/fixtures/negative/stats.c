struct stats {
	atomic_t rx;
	atomic_t tx;
	atomic_long_t bytes;
};

void stats_account(struct stats *st, long len)
{
	atomic_inc(&st->rx);
	atomic_long_add(len, &st->bytes);
}

int stats_snapshot(struct stats *st)
{
	int seq;

	seq = atomic_add_return(1, &st->tx);
	return seq;
}
