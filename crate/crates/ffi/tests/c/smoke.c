#include <math.h>
#include <stdio.h>
#include <string.h>

#include "dam.h"

static int fail(const char *what, DamStatus s) {
    const char *msg = dam_last_error_message();
    fprintf(stderr, "%s: status %d (%s)\n", what, (int)s, msg ? msg : "no message");
    return 1;
}

int main(void) {
    double h = -1.0;
    DamStatus s = dam_belief_entropy(1.0, 1.0, 1.0, &h);
    if (s != DAM_STATUS_OK) return fail("entropy", s);
    if (fabs(h - log2(3.0)) > 1e-12) return fail("entropy value", s);

    s = dam_belief_entropy(0.0, 0.0, 0.0, &h);
    if (s != DAM_STATUS_INVALID_ARGUMENT || dam_last_error_message() == NULL) return fail("zero mass", s);

    DamEngine *engine = NULL;
    s = dam_engine_new(NULL, &engine);
    if (s != DAM_STATUS_OK) return fail("engine", s);
    char *json = NULL;
    s = dam_engine_turn(engine, "I love this espresso machine", &json);
    if (s != DAM_STATUS_OK) return fail("turn", s);
    if (strstr(json, "\"response\"") == NULL) return fail("turn json", s);
    dam_string_free(json);

    DamStore *store = NULL;
    s = dam_engine_store(engine, &store);
    if (s != DAM_STATUS_OK) return fail("store", s);
    size_t n = 0;
    s = dam_store_len(store, &n);
    if (s != DAM_STATUS_OK || n != 1) return fail("len", s);

    dam_store_free(store);
    dam_engine_free(engine);
    printf("ok %s\n", dam_version());
    return 0;
}
