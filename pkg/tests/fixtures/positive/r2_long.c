struct xp {
	atomic_long_t v;
};

bool xp_try_put(struct xp *x)
{
	if (atomic_long_add_unless(&(x)->v, -1, 1))
		return true;
	return false;
}
