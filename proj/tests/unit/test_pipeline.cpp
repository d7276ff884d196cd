#include <gtest/gtest.h>

#include <cmath>

#include "facelab/checkpoint.hpp"
#include "facelab/error.hpp"
#include "facelab/features.hpp"
#include "facelab/pipeline.hpp"
#include "facelab/synthetic.hpp"
#include "facelab/trainer.hpp"
#include "test_util.hpp"

namespace facelab {
namespace {

using testing::TempDir;

class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir();
    SyntheticFaceOptions opt;
    opt.num_identities = 4;
    opt.images_per_identity = 2;
    opt.image_size = 32;
    opt.uv_size = 32;
    opt.seed = 2;
    opt.write_posmaps = false;
    data_ = new SyntheticDataset(generate_synthetic_faces(*dir_ / "data", opt));
    RunConfig c;
    c.seed = 1;
    c.backbone.embedding_dim = 16;
    c.backbone.width = 0.25;
    c.backbone.depth = 0;
    c.backbone.input_height = c.backbone.input_width = 16;
    c.head = default_head_spec(HeadVariant::AmSoftmax, 2, 16);
    c.schedule.total_epochs = 1;
    c.schedule.milestones = {};
    c.schedule.batch_size = 4;
    c.transform.resize_width = c.transform.resize_height = 16;
    TrainOptions t;
    t.out_dir = *dir_ / "run";
    checkpoint_ = new std::filesystem::path(train(c, data_->manifest, t).last_checkpoint);
  }
  static void TearDownTestSuite() {
    delete checkpoint_;
    delete data_;
    delete dir_;
  }

  static PipelineConfig config() {
    PipelineConfig c;
    c.checkpoint = *checkpoint_;
    return c;
  }

  static Detection detection_of(const SampleRecord& s) {
    return Detection{{0.0, 0.0, 32.0, 32.0}, *s.landmarks};
  }

  static Image image_of(const SampleRecord& s) { return read_image(data_->manifest.root / s.image_path); }

  static TempDir* dir_;
  static SyntheticDataset* data_;
  static std::filesystem::path* checkpoint_;
};

TempDir* Pipeline::dir_ = nullptr;
SyntheticDataset* Pipeline::data_ = nullptr;
std::filesystem::path* Pipeline::checkpoint_ = nullptr;

TEST_F(Pipeline, LoadTwiceGivesIdenticalEmbeddings) {
  const auto a = load_models(config());
  const auto b = load_models(config());
  const auto& s = data_->manifest.samples[0];
  const std::vector<Detection> d{detection_of(s)};
  const auto ra = a->process_image(image_of(s), d);
  const auto rb = b->process_image(image_of(s), d);
  ASSERT_TRUE(ra[0].ok) << ra[0].error;
  EXPECT_EQ(ra[0].embedding, rb[0].embedding);
  EXPECT_EQ(a->alignment().width, 16);
}

TEST_F(Pipeline, LoadErrors) {
  auto c = config();
  c.expected_embedding_dim = 512;
  try {
    load_models(c);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("512"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("16"), std::string::npos);
  }
  c = config();
  c.checkpoint = dir_->path() / "missing.fxzc";
  EXPECT_THROW(load_models(c), IoError);
  c = config();
  c.threshold = 1.5;
  EXPECT_THROW(load_models(c), ConfigError);
}

TEST_F(Pipeline, ResultsKeepOrderAndIsolateFailures) {
  const auto p = load_models(config());
  const auto& s0 = data_->manifest.samples[0];
  const auto& s1 = data_->manifest.samples[2];
  const Image img = image_of(s0);
  Detection bad = detection_of(s0);
  bad.box = {0, 0, 0, 32};
  Detection far = detection_of(s0);
  far.landmarks[2] = {500.0, 500.0};
  const std::vector<Detection> dets{detection_of(s0), bad, detection_of(s1), far, detection_of(s0)};
  const auto r = p->process_image(img, dets);
  ASSERT_EQ(r.size(), 5u);
  EXPECT_TRUE(r[0].ok);
  EXPECT_FALSE(r[1].ok);
  EXPECT_FALSE(r[1].error.empty());
  EXPECT_TRUE(r[2].ok);
  EXPECT_FALSE(r[3].ok);
  EXPECT_TRUE(r[4].ok);
  EXPECT_EQ(r[0].embedding, r[4].embedding);
  EXPECT_NE(r[0].embedding, r[2].embedding);
  EXPECT_TRUE(r[1].embedding.empty());
  EXPECT_THROW(p->process_image(img, std::vector<Detection>{}), ValueError);
}

TEST_F(Pipeline, ConsistentWithOfflineExtraction) {
  const auto p = load_models(config());
  auto net = load_backbone_checkpoint(*checkpoint_);
  for (const auto& s : data_->manifest.samples) {
    const Image img = image_of(s);
    const auto r = p->process_image(img, std::vector<Detection>{detection_of(s)});
    ASSERT_TRUE(r[0].ok);
    const Image crop = crop_and_align(img, *s.landmarks, p->alignment());
    EXPECT_EQ(crop, r[0].crop);
    const auto offline = embed_images(*net, std::vector<Image>{crop}, config().normalization, false, 4);
    for (std::size_t d = 0; d < offline[0].size(); ++d) EXPECT_NEAR(offline[0][d], r[0].embedding[d], 1e-6);
  }
}

TEST_F(Pipeline, AnnotationRoundTrip) {
  TempDir dir;
  const std::vector<Detection> dets{detection_of(data_->manifest.samples[0]), detection_of(data_->manifest.samples[1])};
  const auto path = annotation_path_for(dir / "a/face.png");
  EXPECT_EQ(path, dir / "a/face.json");
  std::filesystem::create_directories(path.parent_path());
  write_annotations(path, dets);
  EXPECT_EQ(read_annotations(path), dets);
  testing::write_text(dir / "bad.json", R"([{"box": [0, 0, 1, 1], "landmarks": [[0, 0]]}])");
  EXPECT_THROW(read_annotations(dir / "bad.json"), FormatError);
  EXPECT_THROW(read_annotations(dir / "none.json"), IoError);
}

TEST(Compare, Cases) {
  const std::vector<float> a{1.0f, 0.0f}, b{0.0f, 1.0f};
  const float h = static_cast<float>(std::sqrt(0.5));
  const std::vector<float> c{h, h};
  EXPECT_EQ(compare(a, a, 0.5).similarity, 1.0);
  EXPECT_TRUE(compare(a, a, 0.5).same_identity);
  EXPECT_EQ(compare(a, b, 0.5).similarity, 0.0);
  EXPECT_FALSE(compare(a, b, 0.5).same_identity);
  EXPECT_NEAR(compare(a, c, 0.5).similarity, std::sqrt(0.5), 1e-7);
  EXPECT_THROW(compare(a, std::vector<float>{1.0f, 0.0f, 0.0f}, 0.5), ShapeError);
  EXPECT_THROW(compare(a, std::vector<float>{2.0f, 0.0f}, 0.5), ValueError);
}

TEST(Compare, SymmetricAndThresholdReplay) {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto x = testing::random_unit(rng, 32);
    const auto y = testing::random_unit(rng, 32);
    const double t = rng.uniform(-1.0, 1.0);
    const auto xy = compare(x, y, t);
    const auto yx = compare(y, x, t);
    EXPECT_EQ(xy.similarity, yx.similarity);
    EXPECT_EQ(xy.same_identity, xy.similarity >= t);
    EXPECT_EQ(xy.same_identity, yx.same_identity);
  }
}

}  // namespace
}  // namespace facelab
