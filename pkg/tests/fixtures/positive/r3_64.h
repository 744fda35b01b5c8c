#ifndef R3_64_H
#define R3_64_H

struct dq {
	atomic64_t n;
};

static inline long dq_put(struct dq *d)
{
	long cnt;

	cnt = atomic64_add_return(-1, &(d)->n);
	return cnt;
}

#endif
