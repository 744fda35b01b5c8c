struct kref_like {
	atomic_long_t ref;
};

void kref_like_put(struct kref_like *k, void (*release)(struct kref_like *))
{
	long ref;

	if ((ref = atomic_long_add_return(-1, &k->ref)) == 0)
		release(k);
}
