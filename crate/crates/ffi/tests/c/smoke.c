#include <math.h>
#include <stdio.h>
#include <string.h>

#include "incparse.h"

#define CHECK(call)                                                             \
  do {                                                                          \
    IncparseStatus s_ = (call);                                                 \
    if (s_ != INCPARSE_STATUS_OK) {                                             \
      fprintf(stderr, "%s failed with %d: %s\n", #call, (int)s_,                \
              incparse_last_error());                                           \
      return 1;                                                                 \
    }                                                                           \
  } while (0)

int main(int argc, char **argv) {
  if (argc != 3) {
    fprintf(stderr, "usage: smoke TRAIN HELDOUT\n");
    return 2;
  }
  IncparseModel *model = NULL;
  if (incparse_model_load("/nonexistent/model", &model) != INCPARSE_STATUS_IO ||
      incparse_last_error() == NULL) {
    fprintf(stderr, "missing file not reported\n");
    return 1;
  }
  CHECK(incparse_model_train(argv[1], argv[2], "par+sib", &model));

  IncparseParse *parse = NULL;
  CHECK(incparse_parse(model, "Spot chased the ball", INCPARSE_DEFAULT_BASE_BEAM, 0, &parse));
  if (incparse_parse_failed(parse)) {
    fprintf(stderr, "unexpected garden path\n");
    return 1;
  }
  double total = 0.0;
  for (size_t i = 0; i < incparse_parse_num_words(parse); i++) {
    const char *w = NULL;
    double p = 0.0;
    CHECK(incparse_parse_word(parse, i, &w));
    CHECK(incparse_parse_word_prob(parse, i, &p));
    total += log(p);
  }
  double p = 0.0;
  if (incparse_parse_word_prob(parse, 99, &p) != INCPARSE_STATUS_INDEX_OUT_OF_RANGE) {
    fprintf(stderr, "index check missing\n");
    return 1;
  }
  printf("%s\n%.6f %.6f\n", incparse_parse_tree(parse), incparse_parse_log_prob(parse), total);
  incparse_parse_free(parse);
  incparse_model_free(model);
  return 0;
}
