#include <atomic>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>

#include <httplib.h>
#include <json.hpp>

#include "wse/config.hpp"
#include "wse/errors.hpp"
#include "wse/pipeline.hpp"
#include "wse/similarity.hpp"
#include "wse_testing.hpp"

namespace wse {
namespace {

using json = nlohmann::json;

// In-process stand-in for the similarity sidecar.
class StubSidecar {
 public:
  enum class Mode { kOk, kWideScores, kBadLogical, kBadRequest, kTooLarge, kUnavailable };

  StubSidecar() {
    server_.Post("/v1/similarity", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests;
      const Mode m = mode.load();
      if (m == Mode::kUnavailable || (m == Mode::kOk && unavailable_first.load() > 0 &&
                                      unavailable_first.fetch_sub(1) > 0)) {
        res.status = 503;
        res.set_content(R"({"error":{"code":"warming_up"}})", "application/json");
        return;
      }
      if (m == Mode::kBadRequest || m == Mode::kTooLarge) {
        res.status = m == Mode::kBadRequest ? 400 : 413;
        res.set_content(m == Mode::kBadRequest ? R"({"error":{"code":"bad_request"}})"
                                               : R"({"error":{"code":"batch_too_large"}})",
                        "application/json");
        return;
      }
      const auto body = json::parse(req.body);
      json results = json::array();
      for (const auto& p : body["pairs"]) {
        const auto a = p["a"].get<std::string>();
        const auto b = p["b"].get<std::string>();
        // Directional, so swapped pairs are distinguishable.
        const double x = static_cast<double>(a.size()) / static_cast<double>(a.size() + b.size());
        double s_c = jaccard_similarity(a, b);
        double s_l = 0.5 * s_c + 0.5 * x;
        if (m == Mode::kWideScores) s_c = 1.25;
        if (m == Mode::kBadLogical) s_l = -0.1;
        results.push_back({{"s_c", s_c}, {"s_l", s_l}});
      }
      res.set_content(json{{"results", results}, {"model", "stub"}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubSidecar() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::atomic<Mode> mode{Mode::kOk};
  std::atomic<int> unavailable_first{0};
  std::atomic<int> requests{0};

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

HttpBackend backend_for(const StubSidecar& s, int retries = 3) {
  return HttpBackend(s.endpoint(), "", retries, 5);
}

const std::vector<TextPair> kPairs = {{"long text here", "x"}, {"x", "long text here"}, {"a b", "a"}};

TEST(Remote, PreservesOrder) {
  StubSidecar stub;
  auto http = backend_for(stub);
  const auto r = http.score(kPairs, 1.0);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_GT(r[0].s_l, r[1].s_l);
  EXPECT_DOUBLE_EQ(r[2].s_c, 0.5);
  EXPECT_DOUBLE_EQ(r[2].s_l, 0.5 * 0.5 + 0.5 * 3.0 / 4.0);
}

TEST(Remote, ClampsCrossEncoderScore) {
  StubSidecar stub;
  stub.mode = StubSidecar::Mode::kWideScores;
  auto http = backend_for(stub);
  const auto r = http.score(kPairs, 1.0);
  EXPECT_EQ(r[0].s_c, 1.0);
  EXPECT_EQ(http.clamped_count(), 3u);
}

TEST(Remote, LogicalScoreOutOfRangeIsProtocolError) {
  StubSidecar stub;
  stub.mode = StubSidecar::Mode::kBadLogical;
  auto http = backend_for(stub);
  EXPECT_THROW(http.score(kPairs, 1.0), ProtocolError);
}

TEST(Remote, ClientErrorsAreNotRetried) {
  StubSidecar stub;
  auto http = backend_for(stub);
  for (auto m : {StubSidecar::Mode::kBadRequest, StubSidecar::Mode::kTooLarge}) {
    stub.mode = m;
    stub.requests = 0;
    try {
      http.score(kPairs, 1.0);
      FAIL();
    } catch (const ProtocolError& e) {
      const std::string msg = e.what();
      EXPECT_NE(msg.find(m == StubSidecar::Mode::kBadRequest ? "400" : "413"), std::string::npos)
          << msg;
    }
    EXPECT_EQ(stub.requests.load(), 1);
  }
}

TEST(Remote, UnavailableIsRetried) {
  StubSidecar stub;
  stub.unavailable_first = 2;
  auto http = backend_for(stub, 3);
  EXPECT_EQ(http.score(kPairs, 1.0).size(), 3u);
  EXPECT_EQ(stub.requests.load(), 3);

  stub.mode = StubSidecar::Mode::kUnavailable;
  stub.requests = 0;
  try {
    http.score(kPairs, 1.0);
    FAIL();
  } catch (const TransportError& e) {
    EXPECT_NE(std::string(e.what()).find(stub.endpoint()), std::string::npos) << e.what();
  }
  EXPECT_EQ(stub.requests.load(), 3);
}

TEST(Remote, ScoreFromSidecarEqualsScoreFromCache) {
  StubSidecar stub;
  const auto dir = testing::scratch_dir("remote-e2e");
  auto cfg = load_run_config(testing::fixture("golden.yaml"));
  cfg.similarity.kind = ProviderKind::kRemote;
  cfg.similarity.endpoint = stub.endpoint();
  cfg.similarity.cache_path = dir / "cache.jsonl";
  cfg.output_dir = dir / "remote";
  cfg.jobs = 4;
  std::ostringstream out, err;
  ASSERT_EQ(run_command("score", cfg, out, err), 0) << err.str();
  const int sent = stub.requests.load();
  EXPECT_GT(sent, 0);

  auto cached = cfg;
  cached.similarity.kind = ProviderKind::kCache;
  cached.similarity.endpoint.clear();
  cached.output_dir = dir / "cached";
  cached.jobs = 1;
  ASSERT_EQ(run_command("score", cached, out, err), 0) << err.str();
  EXPECT_EQ(stub.requests.load(), sent);
  EXPECT_EQ(testing::read_file(dir / "remote" / "scores.jsonl"),
            testing::read_file(dir / "cached" / "scores.jsonl"));
}

}  // namespace
}  // namespace wse
