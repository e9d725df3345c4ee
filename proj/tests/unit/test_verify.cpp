#include "doctest.h"
#include "gulf/errors.hpp"
#include "gulf/verify.hpp"

using namespace gulf;

TEST_CASE("every verification suite passes") {
  for (const std::string& suite : verify_suites()) {
    const VerifyReport r = run_verify(suite, 0);
    CHECK_MESSAGE(r.passed(), suite);
    CHECK_FALSE(r.checks.empty());
    const auto doc = r.to_json();
    CHECK(doc.at("suite") == suite);
    CHECK(doc.contains("checks"));
    CHECK(doc.at("passed").get<bool>());
    for (const VerifyCheck& c : r.checks) CHECK_MESSAGE(c.passed, c.name);
  }
  CHECK_THROWS_AS(run_verify("nope", 0), ConfigError);
}
